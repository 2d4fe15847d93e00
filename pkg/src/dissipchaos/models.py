"""Benchmark open-system models as (Hamiltonian, jump operators, rates) bundles."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, asdict, replace
from math import sqrt

import numpy as np
import scipy.sparse as sp

from .errors import DegenerateStateError, DimensionError
from .operators import (
    HERMITIAN_TOL,
    HilbertSpace,
    Operator,
    annihilation,
    embed,
    pauli,
)


@dataclass(frozen=True, eq=False)
class ModelSpec:
    """Lindblad model: ``H`` plus jump operators ``L_mu`` with rates ``gamma_mu``.

    ``boson_factors`` lists the tensor factors that are Fock-truncated modes;
    trajectory code uses it for cutoff-validity warnings.
    """

    space: HilbertSpace
    hamiltonian: Operator
    jumps: tuple[tuple[Operator, float], ...]
    name: str = "custom"
    params: dict = field(default_factory=dict)
    boson_factors: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "jumps", tuple((op, float(rate)) for op, rate in self.jumps))
        if self.hamiltonian.space != self.space:
            raise DimensionError("Hamiltonian does not act on the model space")
        dev = self.hamiltonian.hermitian_deviation()
        if dev > HERMITIAN_TOL:
            raise ValueError(f"Hamiltonian is not Hermitian (max deviation {dev:.3e})")
        for op, rate in self.jumps:
            if op.space != self.space:
                raise DimensionError("jump operator does not act on the model space")
            if not rate >= 0:
                raise ValueError(f"jump rates must be non-negative, got {rate}")

    @property
    def dim(self) -> int:
        return self.space.total_dim

    def with_reversed_hamiltonian(self) -> "ModelSpec":
        """Same jumps, ``H -> -H`` (the backward-time generator used by OTOCs)."""
        return replace(self, hamiltonian=-self.hamiltonian, name=self.name + ":reversed")

    def hash(self) -> str:
        """Content hash of the matrices and rates; keys on-disk caches."""
        h = hashlib.sha256()
        h.update(json.dumps(self.space.factor_dims).encode())
        for op in [self.hamiltonian] + [op for op, _ in self.jumps]:
            m = op.dense()
            h.update(np.ascontiguousarray(m).tobytes())
        h.update(np.array([rate for _, rate in self.jumps], dtype=float).tobytes())
        return h.hexdigest()


# -- parameter records --------------------------------------------------------

@dataclass(frozen=True)
class BoseHubbardParams:
    """Driven-dissipative Bose-Hubbard chain; ``cutoff`` is the Fock cutoff N_c.

    Each site keeps ``cutoff + 1`` Fock levels (|0> ... |N_c>).
    """

    delta: float
    F: float
    J: float = 2.0
    U: float = 1.0
    gamma: float = 1.0
    n_sites: int = 2
    cutoff: int = 7

    def __post_init__(self):
        if self.cutoff < 2:
            raise ValueError(f"Fock cutoff must be >= 2, got {self.cutoff}")
        if self.gamma < 0:
            raise ValueError("loss rate must be non-negative")
        if self.n_sites < 1:
            raise ValueError("need at least one site")


@dataclass(frozen=True)
class SpinChainParams:
    L: int
    F: float = 0.0
    J: float = 1.0
    anisotropy: float = 0.5
    gamma: float = 1.0
    gamma_1_plus: float = 1.0
    gamma_1_minus: float = 0.8
    gamma_L_plus: float = 0.5
    gamma_L_minus: float = 1.2

    def __post_init__(self):
        if self.L < 2:
            raise ValueError(f"chain length must be >= 2, got {self.L}")
        rates = (self.gamma, self.gamma_1_plus, self.gamma_1_minus, self.gamma_L_plus, self.gamma_L_minus)
        if any(r < 0 for r in rates):
            raise ValueError("all rates must be non-negative")


@dataclass(frozen=True)
class RandomLiouvillianParams:
    N: int
    r: int = 2
    g: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.N < 2 or self.r < 1 or self.g < 0:
            raise ValueError(f"invalid random Liouvillian parameters {self}")


def params_to_dict(p) -> dict:
    return asdict(p)


# -- bosonic models ----------------------------------------------------------

def build_bose_hubbard(p: BoseHubbardParams) -> ModelSpec:
    local = p.cutoff + 1
    space = HilbertSpace([local] * p.n_sites)
    a_loc = annihilation(local)
    a = [embed(a_loc, j, space) for j in range(p.n_sites)]
    ad = [op.dag() for op in a]

    H = sp.csr_matrix((space.total_dim, space.total_dim), dtype=complex)
    for j in range(p.n_sites):
        n_j = (ad[j] @ a[j]).matrix
        H = H - p.delta * n_j + 0.5 * p.U * (ad[j] @ ad[j] @ a[j] @ a[j]).matrix
    for j in range(p.n_sites - 1):
        hop = (ad[j + 1] @ a[j]).matrix
        H = H - p.J * (hop + hop.conj().T)
    H = H + p.F * (ad[0] + a[0]).matrix

    jumps = tuple((a[j], p.gamma) for j in range(p.n_sites))
    return ModelSpec(
        space,
        Operator(space, H),
        jumps,
        name="bose_hubbard" if p.n_sites > 1 else "kerr",
        params=asdict(p),
        boson_factors=tuple(range(p.n_sites)),
    )


def build_kerr_resonator(delta: float, U: float, F: float, gamma: float, cutoff: int) -> ModelSpec:
    """Single driven-dissipative Kerr mode (the one-site Bose-Hubbard model)."""
    p = BoseHubbardParams(delta=delta, F=F, J=0.0, U=U, gamma=gamma, n_sites=1, cutoff=cutoff)
    return build_bose_hubbard(p)


def apply_thermodynamic_scaling(p: BoseHubbardParams, L: float) -> BoseHubbardParams:
    """Rescale ``U -> U/L`` and ``F -> F sqrt(L)``; ``U F**2`` is invariant."""
    if not L > 0:
        raise ValueError(f"scaling parameter must be positive, got {L}")
    return replace(p, U=p.U / L, F=p.F * sqrt(L))


# -- spin chain ---------------------------------------------------------------

def build_spin_chain(p: SpinChainParams) -> ModelSpec:
    """Boundary-driven XXZ chain with transverse drive and bulk dephasing."""
    space = HilbertSpace([2] * p.L)
    s = {k: [embed(pauli(k), j, space) for j in range(p.L)] for k in "xyz+-"}

    H = sp.csr_matrix((space.total_dim, space.total_dim), dtype=complex)
    for j in range(p.L - 1):
        H = H + p.J * (
            (s["x"][j] @ s["x"][j + 1]).matrix
            + (s["y"][j] @ s["y"][j + 1]).matrix
            + p.anisotropy * (s["z"][j] @ s["z"][j + 1]).matrix
        )
    for j in range(p.L):
        H = H + p.F * s["x"][j].matrix

    jumps = [(s["z"][j], p.gamma) for j in range(p.L)]
    jumps += [
        (s["+"][0], p.gamma_1_plus),
        (s["-"][0], p.gamma_1_minus),
        (s["+"][p.L - 1], p.gamma_L_plus),
        (s["-"][p.L - 1], p.gamma_L_minus),
    ]
    return ModelSpec(space, Operator(space, H), tuple(jumps), name="spin_chain", params=asdict(p))


# -- random Liouvillians ------------------------------------------------------

def gell_mann_basis(N: int) -> np.ndarray:
    """Orthonormal traceless Hermitian basis, shape ``(N**2 - 1, N, N)``.

    Order: symmetric pairs (j<k), antisymmetric pairs (j<k), then the N-1
    diagonal generators. ``Tr[G_i^dag G_j] = delta_ij``. Together with
    ``1/sqrt(N)`` this spans all N x N matrices.
    """
    coeffs = np.eye(N * N - 1, dtype=complex)
    return np.stack([_combine_gell_mann(c, N) for c in coeffs])


def _combine_gell_mann(w: np.ndarray, N: int) -> np.ndarray:
    """``sum_j G_j w_j`` without materializing the basis."""
    w = np.asarray(w, dtype=complex)
    if w.shape != (N * N - 1,):
        raise DimensionError(f"need {N * N - 1} coefficients, got {w.shape}")
    rows, cols = np.triu_indices(N, k=1)
    npair = rows.size
    ws, wa, wd = w[:npair], w[npair:2 * npair], w[2 * npair:]
    M = np.zeros((N, N), dtype=complex)
    r2 = 1.0 / sqrt(2.0)
    M[rows, cols] += (ws - 1j * wa) * r2
    M[cols, rows] += (ws + 1j * wa) * r2
    # D_l = (sum_{m<l} |m><m| - l |l><l|) / sqrt(l (l + 1)), l = 1..N-1
    l = np.arange(1, N)
    norm = wd / np.sqrt(l * (l + 1.0))
    diag = np.zeros(N, dtype=complex)
    # entry m receives sum over l > m of norm_l; entry l receives -l * norm_l
    tail = np.concatenate([np.cumsum(norm[::-1])[::-1], [0.0]])
    diag += tail
    diag[1:] -= l * norm
    M[np.arange(N), np.arange(N)] += diag
    return M


def _ginibre(rng: np.random.Generator, shape) -> np.ndarray:
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / sqrt(2.0)


def gue(N: int, rng: np.random.Generator) -> np.ndarray:
    """GUE matrix with ``E|H_ij|^2 = 1`` for every entry."""
    A = _ginibre(rng, (N, N))
    return (A + A.conj().T) / sqrt(2.0)


def build_random_liouvillian(p: RandomLiouvillianParams) -> ModelSpec:
    """GUE Hamiltonian plus ``r`` traceless jumps ``g sum_j G_j w_{j,mu}``.

    ``w`` is a complex Ginibre matrix with unit-variance entries; each jump
    enters with rate 1. Draw order is fixed (H first, then w), so the model is
    a deterministic function of ``p.seed``.
    """
    rng = np.random.default_rng(p.seed)
    N = p.N
    space = HilbertSpace(N)
    H = gue(N, rng)
    w = _ginibre(rng, (N * N - 1, p.r))
    jumps = []
    for mu in range(p.r):
        L = p.g * _combine_gell_mann(w[:, mu], N)
        jumps.append((Operator(space, L), 1.0))
    return ModelSpec(space, Operator(space, H), tuple(jumps), name="random_liouvillian", params=asdict(p))


def most_probable_state(rho: Operator | np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Eigenvector of ``rho`` with the largest eigenvalue; refuses ties within ``tol``."""
    m = rho.dense() if isinstance(rho, Operator) else np.asarray(rho)
    vals, vecs = np.linalg.eigh(0.5 * (m + m.conj().T))
    if vals.size > 1 and vals[-1] - vals[-2] < tol:
        ties = vals[vals > vals[-1] - tol]
        raise DegenerateStateError(
            f"leading steady-state eigenvalue is degenerate within {tol}: {ties.tolist()}"
        )
    return vecs[:, -1]


def extend_with_pure_sink(model: ModelSpec, target_state: np.ndarray, rate: float = 1.0) -> ModelSpec:
    """Add a level ``|N>`` and the jump ``|N><target|`` that empties ``target`` into it.

    ``target_state`` should be the most probable eigenvector of the model's
    steady state (see :func:`most_probable_state`); the extended model then
    has the pure steady state ``|N><N|``.
    """
    N = model.dim
    psi = np.asarray(target_state, dtype=complex).ravel()
    if psi.shape != (N,):
        raise DimensionError(f"target state has length {psi.size}, model dimension is {N}")
    psi = psi / np.linalg.norm(psi)
    space = HilbertSpace(N + 1)

    def pad(op: Operator) -> Operator:
        return Operator(space, sp.block_diag([op.sparse(), sp.csr_matrix((1, 1))], format="csr"))

    sink = np.zeros((N + 1, N + 1), dtype=complex)
    sink[N, :N] = psi.conj()
    jumps = [(pad(op), r) for op, r in model.jumps] + [(Operator(space, sp.csr_matrix(sink)), rate)]
    return ModelSpec(
        space,
        pad(model.hamiltonian),
        tuple(jumps),
        name=model.name + "+sink",
        params=dict(model.params, sink_rate=rate),
    )
