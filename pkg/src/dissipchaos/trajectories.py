"""Photon-counting quantum trajectories (first-order jump/no-jump scheme).

Each step either applies one jump operator (probability
``dp = dt * sum_mu gamma_mu <L_mu^dag L_mu>``) or the non-Hermitian
update ``psi <- (1 - i dt H_nh) psi``; the state is renormalized after
both. Jumps happen on step boundaries.

Trajectories are propagated in batches (columns of a ``d x M`` matrix).
Trajectory ``m`` draws its random numbers from its own Philox stream seeded by
``SeedSequence(base_seed, spawn_key=(m,))`` and consumes exactly two uniforms
per step, so results do not depend on batch size or scheduling.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import StepSizeError
from .models import ModelSpec
from .operators import Operator

log = logging.getLogger(__name__)

DP_MAX = 0.05
NORM_TOL = 1e-10
CUTOFF_POP_TOL = 1e-3
_BLOCK = 512
PROPAGATORS = ("euler", "taylor2", "expm")


def trajectory_rng(base_seed: int, index: int) -> np.random.Generator:
    """Counter-based stream for trajectory ``index`` of an ensemble."""
    ss = np.random.SeedSequence(int(base_seed), spawn_key=(int(index),))
    return np.random.Generator(np.random.Philox(ss))


class _Uniforms:
    """Per-trajectory uniform draws, pre-generated in blocks of steps."""

    def __init__(self, rngs: list[np.random.Generator]):
        self.rngs = rngs
        self.buf = None
        self.pos = _BLOCK

    def next(self) -> np.ndarray:
        if self.pos == _BLOCK:
            self.buf = np.stack([g.random((_BLOCK, 2)) for g in self.rngs], axis=1)
            self.pos = 0
        out = self.buf[self.pos]
        self.pos += 1
        return out


@dataclass
class Unraveling:
    """Precomputed sparse operators of the photon-counting unraveling."""

    model: ModelSpec
    jumps: list
    rates: np.ndarray
    h_nh: sp.csr_matrix
    decay: sp.csr_matrix
    dt: float | None = None
    propagator: str = "euler"
    _expm: np.ndarray | None = None

    @classmethod
    def from_model(cls, model: ModelSpec) -> "Unraveling":
        d = model.dim
        jumps, rates = [], []
        decay = sp.csr_matrix((d, d), dtype=complex)
        for op, rate in model.jumps:
            if rate == 0:
                continue
            A = op.sparse()
            jumps.append(A)
            rates.append(rate)
            decay = decay + rate * (A.conj().T @ A)
        h_nh = (model.hamiltonian.sparse() - 0.5j * decay).tocsr()
        return cls(model, jumps, np.array(rates, dtype=float), h_nh, decay.tocsr())

    def max_rate(self) -> float:
        """Operator norm of ``sum gamma L^dag L``, an upper bound on the jump rate."""
        if not self.jumps:
            return 0.0
        M = self.decay
        if M.shape[0] <= 400:
            return float(np.max(np.linalg.eigvalsh(M.toarray())))
        return float(abs(spla.eigsh(M, k=1, which="LA", return_eigenvectors=False)[0]))

    def no_jump(self, psi: np.ndarray, dt: float, propagator: str) -> np.ndarray:
        if propagator == "euler":
            return psi - 1j * dt * (self.h_nh @ psi)
        if propagator == "taylor2":
            hp = self.h_nh @ psi
            return psi - 1j * dt * hp - 0.5 * dt * dt * (self.h_nh @ hp)
        if propagator == "expm":
            if self._expm is None or self.dt != dt:
                self._expm = la.expm(-1j * dt * self.h_nh.toarray())
                self.dt = dt
            return self._expm @ psi
        raise ValueError(f"unknown propagator {propagator!r}; choose from {PROPAGATORS}")


def safe_dt(model: ModelSpec | Unraveling, dp_max: float = DP_MAX, safety: float = 0.9) -> float:
    """Largest step for which the jump probability stays below ``safety * dp_max`` for any state."""
    u = model if isinstance(model, Unraveling) else Unraveling.from_model(model)
    rate = u.max_rate()
    if rate == 0:
        return 1e-2
    return safety * dp_max / rate


@dataclass
class TrajectoryState:
    """Single trajectory: state, time, its own random stream and jump record."""

    psi: np.ndarray
    t: float
    rng: np.random.Generator
    jump_log: list = field(default_factory=list)


def _normalize_columns(psi: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(psi, axis=0)
    return psi / norms


def _batch_step(u: Unraveling, psi: np.ndarray, t: float, dt: float, draws: np.ndarray,
                dp_max: float, propagator: str, logs: list | None):
    """Advance every column of ``psi`` by one step. ``draws`` has shape (M, 2)."""
    M = psi.shape[1]
    if u.jumps:
        applied = [A @ psi for A in u.jumps]
        w = np.stack([r * np.einsum("ij,ij->j", a.conj(), a).real
                      for a, r in zip(applied, u.rates)])
        total = w.sum(axis=0)
        dp = dt * total
        worst = float(dp.max())
        if worst >= dp_max:
            raise StepSizeError(
                f"jump probability {worst:.3g} per step exceeds dp_max={dp_max}; "
                f"reduce dt below {dt * dp_max / worst:.3g}"
            )
        jumped = draws[:, 0] < dp
    else:
        jumped = np.zeros(M, dtype=bool)
    new = u.no_jump(psi, dt, propagator)
    if jumped.any():
        idx = np.flatnonzero(jumped)
        cum = np.cumsum(w[:, idx], axis=0)
        target = draws[idx, 1] * total[idx]
        channel = np.minimum((cum < target[None, :]).sum(axis=0), len(u.jumps) - 1)
        for m, mu in zip(idx, channel):
            new[:, m] = applied[mu][:, m]
            if logs is not None:
                logs[m].append((t + dt, int(mu)))
    return _normalize_columns(new)


def step(state: TrajectoryState, model: ModelSpec | Unraveling, dt: float,
         dp_max: float = DP_MAX, propagator: str = "euler") -> TrajectoryState:
    """One jump/no-jump step of a single trajectory (two uniforms consumed)."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    u = model if isinstance(model, Unraveling) else Unraveling.from_model(model)
    draws = state.rng.random((1, 2))
    logs = [state.jump_log]
    psi = _batch_step(u, state.psi[:, None], state.t, dt, draws, dp_max, propagator, logs)
    return TrajectoryState(psi[:, 0], state.t + dt, state.rng, state.jump_log)


@dataclass
class EnsembleResult:
    """Ensemble of trajectories sampled on a time grid.

    ``observables`` maps a name to an array (n_times, M) of per-trajectory
    expectation values; ``means``/``stderr`` give the ensemble statistics.
    ``states`` (n_times, d, M) and ``rho`` (n_times, d, d) are stored when
    requested.
    """

    times: np.ndarray
    M: int
    base_seed: int
    dt: float
    propagator: str
    observables: dict = field(default_factory=dict)
    states: np.ndarray | None = None
    rho: np.ndarray | None = None
    jump_logs: list = field(default_factory=list)
    cutoff_max_population: float = 0.0

    @property
    def means(self) -> dict:
        return {k: v.mean(axis=1) for k, v in self.observables.items()}

    @property
    def stderr(self) -> dict:
        if self.M < 2:
            return {k: np.full(v.shape[0], np.nan) for k, v in self.observables.items()}
        return {k: v.std(axis=1, ddof=1) / np.sqrt(self.M) for k, v in self.observables.items()}

    def metadata(self) -> dict:
        return {"M": self.M, "base_seed": self.base_seed, "dt": self.dt,
                "propagator": self.propagator, "trajectory_seeds": "SeedSequence(base_seed, spawn_key=(m,))",
                "cutoff_max_population": self.cutoff_max_population}


def _cutoff_masks(model: ModelSpec) -> list[np.ndarray]:
    """Basis-state masks for the top two Fock levels of every bosonic factor."""
    dims = model.space.factor_dims
    grids = np.indices(dims).reshape(len(dims), -1)
    return [grids[f] >= dims[f] - 2 for f in model.boson_factors]


def run_ensemble(
    model: ModelSpec,
    psi0,
    t_grid,
    M: int,
    base_seed: int = 0,
    *,
    dt: float | None = None,
    dp_max: float = DP_MAX,
    propagator: str = "euler",
    observables: dict | None = None,
    store_states: bool = False,
    store_rho: bool = False,
    record_jumps: bool = True,
    first_index: int = 0,
    batch_size: int = 256,
) -> EnsembleResult:
    """Evolve ``M`` trajectories and sample them on ``t_grid``.

    Parameters
    ----------
    psi0 : array or callable
        Initial state vector shared by all trajectories, an array of shape
        (d, M) with one column per trajectory, or ``psi0(rng)`` returning a
        state from the trajectory's own stream (drawn before any step).
    t_grid : array
        Non-decreasing sampling times; each is rounded to a whole number of
        steps.
    dt : float, optional
        Step size; defaults to :func:`safe_dt`.
    observables : dict of name -> Operator
        Expectation values recorded per trajectory.
    first_index : int
        Index of the first trajectory, so disjoint ranges of one ensemble can be
        run separately and merged.
    """
    if M < 1:
        raise ValueError("need at least one trajectory")
    if propagator not in PROPAGATORS:
        raise ValueError(f"unknown propagator {propagator!r}; choose from {PROPAGATORS}")
    t_grid = np.asarray(t_grid, dtype=float).ravel()
    if t_grid.size == 0 or np.any(np.diff(t_grid) < 0) or t_grid[0] < 0:
        raise ValueError("t_grid must be a non-empty, non-decreasing list of non-negative times")
    u = Unraveling.from_model(model)
    if dt is None:
        dt = safe_dt(u, dp_max)
    steps_at = np.rint(t_grid / dt).astype(np.int64)
    d = model.dim
    observables = dict(observables or {})
    obs_mats = {k: (v.sparse() if isinstance(v, Operator) else sp.csr_matrix(v))
                for k, v in observables.items()}
    masks = _cutoff_masks(model)

    nT = t_grid.size
    obs_out = {k: np.empty((nT, M)) for k in obs_mats}
    states = np.empty((nT, d, M), dtype=complex) if store_states else None
    rho = np.zeros((nT, d, d), dtype=complex) if store_rho else None
    logs_all: list = []
    top_pop = 0.0

    for start in range(0, M, batch_size):
        stop = min(M, start + batch_size)
        idx = range(first_index + start, first_index + stop)
        rngs = [trajectory_rng(base_seed, m) for m in idx]
        if callable(psi0):
            psi = np.stack([np.asarray(psi0(g), dtype=complex) for g in rngs], axis=1)
        else:
            p = np.asarray(psi0, dtype=complex)
            psi = np.repeat(p[:, None], stop - start, axis=1) if p.ndim == 1 else p[:, start:stop].copy()
        if psi.shape[0] != d:
            raise ValueError(f"initial state has dimension {psi.shape[0]}, model has {d}")
        psi = _normalize_columns(psi)
        uni = _Uniforms(rngs)
        logs = [[] for _ in idx] if record_jumps else None
        n = 0
        for k, target in enumerate(steps_at):
            while n < target:
                psi = _batch_step(u, psi, n * dt, dt, uni.next(), dp_max, propagator, logs)
                n += 1
            for name, O in obs_mats.items():
                obs_out[name][k, start:stop] = np.einsum("ij,ij->j", psi.conj(), O @ psi).real
            if store_states:
                states[k, :, start:stop] = psi
            if store_rho:
                rho[k] += psi @ psi.conj().T
            prob = np.abs(psi) ** 2
            for mask in masks:
                top_pop = max(top_pop, float(prob[mask].sum(axis=0).mean()))
        if record_jumps:
            logs_all.extend(logs)

    if rho is not None:
        rho /= M
    if top_pop > CUTOFF_POP_TOL:
        warnings.warn(
            f"population of the two highest Fock levels reached {top_pop:.2e} "
            f"(> {CUTOFF_POP_TOL:g}); increase the Fock cutoff",
            RuntimeWarning, stacklevel=2,
        )
    return EnsembleResult(
        times=steps_at * dt, M=M, base_seed=base_seed, dt=dt, propagator=propagator,
        observables=obs_out, states=states, rho=rho, jump_logs=logs_all,
        cutoff_max_population=top_pop,
    )


def run_trajectory(model: ModelSpec, psi0, t_grid, dt: float | None = None, seed: int = 0,
                   index: int = 0, **kw) -> EnsembleResult:
    """Single trajectory (``M = 1``) with trajectory index ``index`` of stream ``seed``."""
    return run_ensemble(model, psi0, t_grid, 1, seed, dt=dt, first_index=index,
                        store_states=kw.pop("store_states", True), **kw)


def ensemble_average(model: ModelSpec, psi0, t_grid, M: int, base_seed: int = 0,
                     **kw) -> EnsembleResult:
    """Ensemble with averaged density matrices ``(1/M) sum_m |psi_m><psi_m|`` on the grid."""
    kw.setdefault("store_rho", True)
    return run_ensemble(model, psi0, t_grid, M, base_seed, **kw)


def jump_log_rows(logs: list) -> list[tuple[int, float, int]]:
    """Flatten per-trajectory jump logs into (trajectory, time, channel) rows for CSV export."""
    return [(m, t, mu) for m, log_m in enumerate(logs) for t, mu in log_m]
