"""Mean-field (Gross-Pitaevskii) and truncated-Wigner dynamics of the driven Bose-Hubbard chain.

Mean-field equations, site ``j`` with open-chain hopping and a drive on site 0::

    d alpha_j/dt = (i Delta - gamma/2) alpha_j - i U |alpha_j|^2 alpha_j
                   + i J (alpha_{j-1} + alpha_{j+1}) - i F delta_{j0}

The truncated-Wigner equations replace ``|alpha|^2`` by ``|alpha|^2 - 1`` and
add complex white noise ``sqrt(gamma/2) xi_j`` with
``<xi_j(t) xi_k*(t')> = delta_jk delta(t - t')``.

Hot loops are compiled with numba.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, asdict

import numba
import numpy as np

from .errors import BlowUpError

log = logging.getLogger(__name__)

BLOWUP = 1e8


@dataclass(frozen=True)
class ChainParams:
    """Parameters in units where the Kerr strength ``U`` is typically 1."""

    delta: float
    F: float
    J: float = 2.0
    U: float = 1.0
    gamma: float = 1.0
    n_sites: int = 2

    def __post_init__(self):
        if self.n_sites < 1:
            raise ValueError("need at least one site")
        if self.gamma < 0:
            raise ValueError("gamma must be non-negative")

    def as_array(self) -> np.ndarray:
        return np.array([self.delta, self.F, self.J, self.U, self.gamma], dtype=float)


@dataclass(frozen=True)
class LyapunovConfig:
    epsilon: float = 1e-8
    dt: float = 1e-3
    n_transient: int = 10_000
    n_sample: int = 1_000_000
    n_blocks: int = 50

    def __post_init__(self):
        if not (self.epsilon > 0 and self.dt > 0 and self.n_transient >= 0
                and self.n_sample > 0 and self.n_blocks >= 2):
            raise ValueError(f"invalid Lyapunov configuration {self}")
        if self.n_sample < self.n_blocks:
            raise ValueError("n_sample must be at least n_blocks")


@dataclass(frozen=True)
class LyapunovResult:
    exponent: float
    stderr: float
    classification: str
    n_reperturbed: int
    config: dict

    @property
    def is_zero(self) -> bool:
        return self.classification == "zero"


def default_dt(U: float, scale: float = 1e-3) -> float:
    return scale / U if U != 0 else scale


# -- kernels ----------------------------------------------------------------------

@numba.njit(cache=True)
def _rhs(a, p, wigner):
    delta, F, J, U, gamma = p[0], p[1], p[2], p[3], p[4]
    n = a.shape[0]
    out = np.empty_like(a)
    lin = 1j * delta - 0.5 * gamma
    shift = 1.0 if wigner else 0.0
    for j in range(n):
        aj = a[j]
        v = lin * aj - 1j * U * ((aj.real * aj.real + aj.imag * aj.imag) - shift) * aj
        hop = 0j
        if j > 0:
            hop += a[j - 1]
        if j < n - 1:
            hop += a[j + 1]
        v += 1j * J * hop
        if j == 0:
            v -= 1j * F
        out[j] = v
    return out


@numba.njit(cache=True)
def _rk4(a, p, dt):
    k1 = _rhs(a, p, False)
    k2 = _rhs(a + 0.5 * dt * k1, p, False)
    k3 = _rhs(a + 0.5 * dt * k2, p, False)
    k4 = _rhs(a + dt * k3, p, False)
    return a + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


@numba.njit(cache=True)
def _integrate(a0, p, dt, n_steps, stride):
    n_out = n_steps // stride + 1
    out = np.empty((n_out, a0.shape[0]), dtype=np.complex128)
    a = a0.copy()
    out[0] = a
    k = 1
    for s in range(1, n_steps + 1):
        a = _rk4(a, p, dt)
        if not np.all(np.isfinite(a)) or np.max(np.abs(a)) > BLOWUP:
            return out[:k], s
        if s % stride == 0:
            out[k] = a
            k += 1
    return out, -1


@numba.njit(cache=True)
def _distance(a, b):
    s = 0.0
    for j in range(a.shape[0]):
        d = a[j] - b[j]
        s += d.real * d.real + d.imag * d.imag
    return math.sqrt(s)


@numba.njit(cache=True)
def _orbit_separation(a0, p, dt, eps, n_transient, n_sample):
    n = a0.shape[0]
    y1 = a0.copy()
    # uniform perturbation of every real coordinate
    y2 = a0 + eps * (1.0 + 1.0j)
    ell = np.empty(n_sample)
    n_reperturb = 0
    for s in range(n_transient + n_sample):
        y1 = _rk4(y1, p, dt)
        y2 = _rk4(y2, p, dt)
        if not (np.all(np.isfinite(y1)) and np.all(np.isfinite(y2))):
            return ell, n_reperturb, s
        d = _distance(y1, y2)
        if d == 0.0:
            n_reperturb += 1
            y2 = y1 + (eps / math.sqrt(2.0 * n)) * (1.0 + 1.0j)
            if s >= n_transient:
                ell[s - n_transient] = 0.0
            continue
        if s >= n_transient:
            ell[s - n_transient] = math.log(d / eps)
        y2 = y1 + (eps / d) * (y2 - y1)
    return ell, n_reperturb, -1


# -- mean-field API ---------------------------------------------------------------

def gp_rhs(alphas, params: ChainParams) -> np.ndarray:
    """Time derivative of the mean-field amplitudes."""
    a = np.asarray(alphas, dtype=np.complex128)
    if a.shape != (params.n_sites,):
        raise ValueError(f"expected {params.n_sites} amplitudes, got shape {a.shape}")
    return _rhs(a, params.as_array(), False)


def integrate_classical(alphas0, params: ChainParams, t_final: float, dt: float | None = None,
                        stride: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Fixed-step RK4 trajectory; returns ``(times, alphas)`` sampled every ``stride`` steps.

    Raises
    ------
    BlowUpError
        The state becomes non-finite or exceeds ``1e8`` in modulus.
    """
    dt = default_dt(params.U) if dt is None else float(dt)
    n_steps = int(round(t_final / dt))
    a0 = np.asarray(alphas0, dtype=np.complex128)
    if a0.shape != (params.n_sites,):
        raise ValueError(f"expected {params.n_sites} amplitudes, got shape {a0.shape}")
    out, bad = _integrate(a0, params.as_array(), dt, n_steps, int(stride))
    if bad >= 0:
        raise BlowUpError(f"mean-field state diverged at t={bad * dt:.6g}", time=bad * dt)
    return np.arange(out.shape[0]) * dt * stride, out


def fixed_point(params: ChainParams, guess=None) -> np.ndarray:
    """Stationary amplitudes from a root solve of ``gp_rhs = 0`` (real and imaginary parts)."""
    from scipy.optimize import fsolve

    n = params.n_sites
    g = np.zeros(n, dtype=complex) if guess is None else np.asarray(guess, dtype=complex)

    def f(x):
        r = gp_rhs(x[:n] + 1j * x[n:], params)
        return np.concatenate([r.real, r.imag])

    x = fsolve(f, np.concatenate([g.real, g.imag]), xtol=1e-14)
    return x[:n] + 1j * x[n:]


def lyapunov_max(alphas0, params: ChainParams, cfg: LyapunovConfig | None = None,
                 zero_sigmas: float = 3.0) -> LyapunovResult:
    """Largest Lyapunov exponent by the orbit-separation method.

    The companion orbit is pulled back to distance ``epsilon`` along
    ``y2 - y1`` after every step; ``log(d_k / epsilon)`` is accumulated after
    the transient and the exponent is its mean divided by ``dt``. The
    standard error comes from ``cfg.n_blocks`` contiguous blocks. The
    result is classified ``"zero"`` when ``|Lambda| < zero_sigmas * stderr``.
    """
    cfg = cfg or LyapunovConfig(dt=default_dt(params.U))
    a0 = np.asarray(alphas0, dtype=np.complex128)
    eps_coord = cfg.epsilon
    ell, n_rep, bad = _orbit_separation(a0, params.as_array(), cfg.dt, eps_coord,
                                        cfg.n_transient, cfg.n_sample)
    if bad >= 0:
        raise BlowUpError(f"orbit diverged at t={bad * cfg.dt:.6g}", time=bad * cfg.dt)
    if n_rep:
        log.info("companion orbit re-perturbed %d times after collapsing onto the reference", n_rep)
    lam = float(ell.mean() / cfg.dt)
    nb = cfg.n_blocks
    usable = (ell.size // nb) * nb
    blocks = ell[:usable].reshape(nb, -1).mean(axis=1) / cfg.dt
    se = float(blocks.std(ddof=1) / math.sqrt(nb))
    if abs(lam) < zero_sigmas * se:
        cls = "zero"
    else:
        cls = "positive" if lam > 0 else "negative"
    return LyapunovResult(lam, se, cls, int(n_rep), asdict(cfg))


# -- truncated Wigner ----------------------------------------------------------------

@numba.njit(cache=True)
def _twa_drift(a, p):
    return _rhs(a, p, True)


@numba.njit(cache=True)
def _twa_drift_into(a, p, out):
    delta, F, J, U, gamma = p[0], p[1], p[2], p[3], p[4]
    n = a.shape[0]
    lin = 1j * delta - 0.5 * gamma
    for j in range(n):
        aj = a[j]
        v = lin * aj - 1j * U * ((aj.real * aj.real + aj.imag * aj.imag) - 1.0) * aj
        hop = 0j
        if j > 0:
            hop += a[j - 1]
        if j < n - 1:
            hop += a[j + 1]
        v += 1j * J * hop
        if j == 0:
            v -= 1j * F
        out[j] = v


@numba.njit(cache=True)
def _twa_pair(a, b, p, dt, n_steps, seed):
    """Two replicas driven by the same Wiener path; returns final states and blow-up step (-1 if none)."""
    np.random.seed(seed)
    n = a.shape[0]
    amp = math.sqrt(0.5 * p[4] * dt * 0.5)
    a = a.copy()
    b = b.copy()
    fa = np.empty(n, dtype=np.complex128)
    fb = np.empty(n, dtype=np.complex128)
    for s in range(n_steps):
        _twa_drift_into(a, p, fa)
        _twa_drift_into(b, p, fb)
        for j in range(n):
            xi = amp * (np.random.standard_normal() + 1j * np.random.standard_normal())
            a[j] += dt * fa[j] + xi
            b[j] += dt * fb[j] + xi
        if s % 1000 == 0:
            for j in range(n):
                if not (abs(a[j]) < BLOWUP and abs(b[j]) < BLOWUP):
                    return a, b, s
    for j in range(n):
        if not (abs(a[j]) < BLOWUP and abs(b[j]) < BLOWUP):
            return a, b, n_steps
    return a, b, -1


@numba.njit(cache=True)
def _twa_single(a, p, dt, n_steps, stride, seed):
    np.random.seed(seed)
    n = a.shape[0]
    amp = math.sqrt(0.5 * p[4] * dt * 0.5)
    n_out = n_steps // stride + 1
    out = np.empty((n_out, n), dtype=np.complex128)
    out[0] = a
    k = 1
    for s in range(1, n_steps + 1):
        noise = np.empty(n, dtype=np.complex128)
        for j in range(n):
            noise[j] = amp * (np.random.standard_normal() + 1j * np.random.standard_normal())
        a = a + dt * _twa_drift(a, p) + noise
        if s % stride == 0:
            out[k] = a
            k += 1
    return out


def twa_drift(alphas, params: ChainParams) -> np.ndarray:
    """Deterministic part of the truncated-Wigner equations."""
    return _twa_drift(np.asarray(alphas, dtype=np.complex128), params.as_array())


def twa_step(alphas, params: ChainParams, dt: float, rng: np.random.Generator) -> np.ndarray:
    """One Euler-Maruyama step. Each quadrature of ``dW_j`` has variance ``dt/2``."""
    a = np.asarray(alphas, dtype=np.complex128)
    dW = np.sqrt(dt / 2) * (rng.standard_normal(a.shape) + 1j * rng.standard_normal(a.shape))
    return a + dt * twa_drift(a, params) + np.sqrt(params.gamma / 2) * dW


def _stream_seed(base_seed: int, index: int) -> int:
    ss = np.random.SeedSequence(int(base_seed), spawn_key=(int(index),))
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def wigner_sample(alpha0, rng: np.random.Generator) -> np.ndarray:
    """Wigner-distributed sample of the coherent state(s) ``alpha0``: quadrature variance 1/4."""
    a = np.asarray(alpha0, dtype=np.complex128)
    return a + 0.5 * (rng.standard_normal(a.shape) + 1j * rng.standard_normal(a.shape))


def twa_trajectory(alphas0, params: ChainParams, t_final: float, dt: float | None = None,
                   stride: int = 1, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """One truncated-Wigner trajectory from fixed initial amplitudes."""
    dt = default_dt(params.U, 1e-4) if dt is None else float(dt)
    n_steps = int(round(t_final / dt))
    out = _twa_single(np.asarray(alphas0, dtype=np.complex128), params.as_array(), dt,
                      n_steps, int(stride), int(seed))
    return np.arange(out.shape[0]) * dt * stride, out


@dataclass(frozen=True)
class OTOCResult:
    D_ss: float
    stderr: float
    D_ss_per_mode: np.ndarray
    stderr_per_mode: np.ndarray
    D_ss_summed: float
    M: int
    metadata: dict

    def record(self) -> dict:
        return {
            "D_ss": self.D_ss,
            "stderr": self.stderr,
            "D_ss_per_mode": self.D_ss_per_mode.tolist(),
            "stderr_per_mode": self.stderr_per_mode.tolist(),
            "D_ss_summed": self.D_ss_summed,
            "M": self.M,
            **self.metadata,
        }


DEFAULT_EPSILON = 0.01 * (1 + 1j) / math.sqrt(2)


def replica_distances(params: ChainParams, M: int, *, t_relax: float | None = None,
                      epsilon: complex = DEFAULT_EPSILON, dt: float | None = None,
                      alpha0=None, base_seed: int = 0, first_index: int = 0) -> np.ndarray:
    """Per-mode distances ``|alpha_b - alpha_a|`` after ``t_relax`` for ``M`` replica pairs.

    Every pair starts from a Wigner sample of ``alpha0`` (default: vacuum on
    every site), offsets every mode of replica ``b`` by ``epsilon`` and
    drives both replicas with the same noise path.
    """
    if M < 1:
        raise ValueError("need at least one trajectory")
    t_relax = 50.0 / params.gamma if t_relax is None else float(t_relax)
    dt = default_dt(params.U, 1e-4) if dt is None else float(dt)
    n_steps = int(round(t_relax / dt))
    a0 = np.zeros(params.n_sites, dtype=complex) if alpha0 is None else np.asarray(alpha0, dtype=complex)
    p = params.as_array()
    out = np.empty((M, params.n_sites))
    for i in range(M):
        m = first_index + i
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(int(base_seed), spawn_key=(m,))))
        a = wigner_sample(a0, rng)
        b = a + epsilon
        a, b, bad = _twa_pair(a, b, p, dt, n_steps, _stream_seed(base_seed + 1, m))
        if bad >= 0:
            raise BlowUpError(f"Wigner trajectory {m} diverged near t={bad * dt:.6g}", time=bad * dt)
        out[i] = np.abs(b - a)
    return out


def semiclassical_otoc(params: ChainParams, M: int = 1000, *, t_relax: float | None = None,
                       epsilon: complex = DEFAULT_EPSILON, dt: float | None = None, alpha0=None,
                       base_seed: int = 0) -> OTOCResult:
    """Steady-state replica decorrelation ``D_ss = 1 - <exp(-d)>``.

    ``D_ss`` is reported for the first site (the driven one); per-mode values
    and the variant with distances summed over modes are included.
    """
    t_relax = 50.0 / params.gamma if t_relax is None else float(t_relax)
    dt = default_dt(params.U, 1e-4) if dt is None else float(dt)
    d = replica_distances(params, M, t_relax=t_relax, epsilon=epsilon, dt=dt, alpha0=alpha0,
                          base_seed=base_seed)
    e = np.exp(-d)
    per_mode = 1.0 - e.mean(axis=0)
    se_mode = e.std(axis=0, ddof=1) / math.sqrt(M) if M > 1 else np.full(params.n_sites, np.nan)
    summed = 1.0 - float(np.exp(-d.sum(axis=1)).mean())
    meta = {"t_relax": t_relax, "dt": dt, "epsilon": [epsilon.real, epsilon.imag],
            "base_seed": base_seed, "params": asdict(params)}
    return OTOCResult(float(per_mode[0]), float(se_mode[0]), per_mode, se_mode, summed, M, meta)
