"""Liouvillian assembly, full eigendecomposition, steady state and spectral weights.

The eigendecomposition is stored as two column matrices: ``right[:, j]`` is
``vec(eta_j)`` and ``left[:, j]`` is ``vec(sigma_j)`` such that
``left.conj().T @ right == I``. Spectral weights are then ``c = left^H vec(rho)``.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
from scipy.optimize import linear_sum_assignment
from scipy.sparse.csgraph import connected_components
import scipy.sparse.linalg as spla
from scipy.sparse.linalg import expm_multiply
from scipy.spatial import cKDTree

from .errors import (
    BiorthogonalityError,
    DimensionError,
    MultipleSteadyStatesError,
    NumericalError,
    ResourceGuardError,
)
from .models import ModelSpec
from .operators import HilbertSpace, Operator, SuperOperator, devectorize, vectorize

log = logging.getLogger(__name__)

# guard on the superoperator side length (Hilbert dimension squared)
MAX_SUPEROP_DIM = 5000
TIE_TOL = 1e-9
ZERO_TOL = 1e-9
POSITIVITY_TOL = 1e-9
# pairs with |<sigma|eta>| below this are treated as numerically defective
MIN_OVERLAP = 1e-13
MAX_CLUSTER_COND = 1e10


def assemble(model: ModelSpec) -> SuperOperator:
    """Sparse matrix of ``rho -> -i[H, rho] + sum_mu gamma_mu D[L_mu] rho``."""
    d = model.dim
    eye = sp.identity(d, dtype=complex, format="csr")
    H = model.hamiltonian.sparse()
    L = -1j * (sp.kron(eye, H) - sp.kron(H.T, eye))
    for op, rate in model.jumps:
        if rate == 0:
            continue
        A = op.sparse()
        AdA = (A.conj().T @ A).tocsr()
        L = L + rate * (
            sp.kron(A.conj(), A) - 0.5 * sp.kron(eye, AdA) - 0.5 * sp.kron(AdA.T, eye)
        )
    return SuperOperator(sp.csr_matrix(L))


@dataclass(frozen=True, eq=False)
class LiouvillianSpectrum:
    """Biorthonormal eigendecomposition of a Liouvillian.

    Eigenvalues are sorted lexicographically by (Re, Im). ``right`` columns
    have unit 2-norm except the steady one, which is scaled to unit trace.
    """

    eigenvalues: np.ndarray
    right: np.ndarray
    left: np.ndarray
    steady_index: int
    space: HilbertSpace
    model_hash: str = ""
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        n = self.eigenvalues.shape[0]
        if self.right.shape != (n, n) or self.left.shape != (n, n):
            raise DimensionError("eigenvector matrices do not match the number of eigenvalues")
        if self.space.total_dim ** 2 != n:
            raise DimensionError("spectrum size does not match the Hilbert space")
        for a in (self.eigenvalues, self.right, self.left):
            a.setflags(write=False)

    @property
    def size(self) -> int:
        return self.eigenvalues.shape[0]

    @property
    def spectral_radius(self) -> float:
        return float(np.max(np.abs(self.eigenvalues)))

    @property
    def tol_zero(self) -> float:
        return ZERO_TOL * max(self.spectral_radius, 1.0)

    @property
    def steady_eigenvalue(self) -> complex:
        return complex(self.eigenvalues[self.steady_index])

    def right_op(self, j: int) -> Operator:
        return devectorize(self.right[:, j], self.space)

    def left_op(self, j: int) -> Operator:
        return devectorize(self.left[:, j], self.space)

    def biorthogonality_error(self) -> float:
        """max |sigma_j^dag eta_l - delta_jl| (costs one dense matmul)."""
        G = self.left.conj().T @ self.right
        G[np.diag_indices_from(G)] -= 1.0
        return float(np.max(np.abs(G)))


@dataclass(frozen=True)
class SpectralWeights:
    coefficients: np.ndarray
    steady_index: int

    def __post_init__(self):
        self.coefficients.setflags(write=False)

    @property
    def magnitudes(self) -> np.ndarray:
        return np.abs(self.coefficients)


def _tie_clusters(w: np.ndarray, tol: float) -> list[np.ndarray]:
    """Groups of indices whose eigenvalues lie within ``tol`` of each other (transitively)."""
    pts = np.column_stack([w.real, w.imag])
    pairs = cKDTree(pts).query_pairs(tol, output_type="ndarray")
    if len(pairs) == 0:
        return []
    n = len(w)
    graph = sp.coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
    _, labels = connected_components(graph, directed=False)
    counts = np.bincount(labels)
    return [np.flatnonzero(labels == lab) for lab in np.flatnonzero(counts > 1)]


def _biorthonormalize_cluster(w, vl, vr, idx):
    """Pair left/right vectors of a near-degenerate cluster and biorthonormalize it in place."""
    S = vl[:, idx].conj().T @ vr[:, idx]
    # match each right vector to the left vector of largest overlap
    rows, cols = linear_sum_assignment(-np.abs(S))
    perm = np.empty_like(cols)
    perm[cols] = rows
    VL = vl[:, idx[perm]]
    S = VL.conj().T @ vr[:, idx]
    cond = np.linalg.cond(S)
    if not np.isfinite(cond) or cond > MAX_CLUSTER_COND:
        raise BiorthogonalityError(
            f"cannot biorthonormalize near-degenerate eigenvalue cluster "
            f"{np.array2string(w[idx], precision=6)} (overlap condition number {cond:.2e})",
            cluster=w[idx],
        )
    # VL <- VL S^{-H} gives VL^H VR = I on the cluster
    vl[:, idx] = la.solve(S.conj().T, VL.conj().T).conj().T


def diagonalize(
    L: SuperOperator | ModelSpec,
    *,
    force: bool = False,
    max_superop_dim: int = MAX_SUPEROP_DIM,
    tie_tol: float = TIE_TOL,
) -> LiouvillianSpectrum:
    """Full dense eigendecomposition with biorthonormal left/right eigenoperators.

    Parameters
    ----------
    L : SuperOperator or ModelSpec
        A model is assembled first; its hash is recorded on the result.
    force : bool
        Bypass the memory guard on the superoperator size.
    max_superop_dim : int
        Guard threshold; superoperators with more than ``max_superop_dim``
        rows (Hilbert dimension squared) are refused unless ``force`` is set.
    tie_tol : float
        Eigenvalues closer than ``tie_tol * max(1, spectral radius)`` are
        treated as one cluster and biorthonormalized together.

    Raises
    ------
    ResourceGuardError
        Problem exceeds the guard and ``force`` is not set.
    BiorthogonalityError
        A (near-)defective eigenvalue or cluster cannot be paired.
    """
    model_hash = ""
    if isinstance(L, ModelSpec):
        model_hash = L.hash()
        space = L.space
        L = assemble(L)
    else:
        space = HilbertSpace(L.hilbert_dim)
    n = L.dim
    if n > max_superop_dim and not force:
        raise ResourceGuardError(
            f"superoperator dimension {n} exceeds guard {max_superop_dim} "
            f"({16 * 3 * n * n / 1e9:.1f} GB of dense storage); pass force=True to proceed"
        )
    A = L.dense()
    if not np.all(np.isfinite(A)):
        raise NumericalError("Liouvillian contains non-finite entries")

    w, vl, vr = la.eig(A, left=True, right=True, overwrite_a=True, check_finite=False)
    del A
    # quantize Re so floating-point noise does not scramble ties in the ordering
    scale = tie_tol * max(float(np.max(np.abs(w))), 1.0)
    order = np.lexsort((w.imag, np.round(w.real / scale)))
    w = w[order]
    vl = vl[:, order]
    vr = vr[:, order]

    radius = float(np.max(np.abs(w)))
    clustered = np.zeros(n, dtype=bool)
    for idx in _tie_clusters(w, tie_tol * max(radius, 1.0)):
        _biorthonormalize_cluster(w, vl, vr, idx)
        clustered[idx] = True

    s = np.einsum("ij,ij->j", vl.conj(), vr)
    bad = np.flatnonzero(np.abs(s) < MIN_OVERLAP)
    if bad.size:
        raise BiorthogonalityError(
            f"near-defective eigenvalues with vanishing left/right overlap: "
            f"{np.array2string(w[bad][:10], precision=6)}",
            cluster=w[bad],
        )
    vl /= s.conj()[None, :]

    steady = int(np.argmin(np.abs(w)))
    d = space.total_dim
    tr = vr[:: d + 1, steady].sum()
    if abs(tr) < 1e-12:
        raise NumericalError("right eigenvector of the smallest eigenvalue has vanishing trace")
    vr[:, steady] /= tr
    vl[:, steady] *= np.conj(tr)

    meta = {"n_clusters": int(clustered.sum()), "tie_tol": tie_tol}
    return LiouvillianSpectrum(w, vr, vl, steady, space, model_hash, meta)


def steady_state(spec: LiouvillianSpectrum) -> Operator:
    """Hermitian, unit-trace, positive steady state from the null right eigenoperator.

    Raises
    ------
    MultipleSteadyStatesError
        More than one eigenvalue lies within ``tol_zero`` of zero.
    NumericalError
        The extracted matrix has an eigenvalue below ``-1e-9``.
    """
    near_zero = np.flatnonzero(np.abs(spec.eigenvalues) < spec.tol_zero)
    if near_zero.size > 1:
        raise MultipleSteadyStatesError(
            f"{near_zero.size} eigenvalues within {spec.tol_zero:.2e} of zero: "
            f"{spec.eigenvalues[near_zero]}"
        )
    rho = spec.right_op(spec.steady_index).dense()
    rho = 0.5 * (rho + rho.conj().T)
    rho /= np.trace(rho).real
    vals, vecs = np.linalg.eigh(rho)
    if vals.min() < -POSITIVITY_TOL:
        raise NumericalError(
            f"steady state has negative eigenvalue {vals.min():.3e} below -{POSITIVITY_TOL:g}"
        )
    if vals.min() < 0:
        vals = np.clip(vals, 0.0, None)
        vals /= vals.sum()
        rho = (vecs * vals) @ vecs.conj().T
    return Operator(spec.space, rho)


def spectral_weights(spec: LiouvillianSpectrum, rho) -> SpectralWeights:
    """``c_j = Tr[sigma_j^dag rho]``; ``rho`` is an Operator or a vectorized matrix."""
    if isinstance(rho, Operator):
        if rho.space.total_dim != spec.space.total_dim:
            raise DimensionError("density matrix does not act on the spectrum's space")
        v = vectorize(rho)
    else:
        v = np.asarray(rho, dtype=complex)
    c = spec.left.conj().T @ v
    return SpectralWeights(c, spec.steady_index)


def reconstruct(spec: LiouvillianSpectrum, weights: SpectralWeights | np.ndarray) -> Operator:
    c = weights.coefficients if isinstance(weights, SpectralWeights) else np.asarray(weights)
    return devectorize(spec.right @ c, spec.space)


def propagate(target, rho: Operator, t: float) -> Operator:
    """``exp(L t) rho`` using either a spectrum (exact modes) or a superoperator (Krylov-free expm action).

    Backward-time variants are obtained by diagonalizing or assembling the
    model returned by :meth:`ModelSpec.with_reversed_hamiltonian`.
    """
    t = float(t)
    if not np.isfinite(t):
        raise ValueError(f"propagation time must be finite, got {t}")
    if isinstance(target, LiouvillianSpectrum):
        c = spectral_weights(target, rho).coefficients
        v = target.right @ (np.exp(target.eigenvalues * t) * c)
        return devectorize(v, rho.space)
    if isinstance(target, ModelSpec):
        target = assemble(target)
    v = vectorize(rho)
    if t == 0:
        return Operator(rho.space, rho.dense())
    M = target.matrix if sp.issparse(target.matrix) else sp.csr_matrix(target.matrix)
    out = expm_multiply(M * t, v)
    return devectorize(out, rho.space)


def eigenvalues_to_csv(path, eigenvalues, metadata: dict | None = None) -> None:
    """Write ``re,im`` rows; ``metadata`` goes on a leading ``# {json}`` comment line."""
    w = np.asarray(eigenvalues).ravel()
    with open(path, "w") as fh:
        if metadata is not None:
            fh.write("# " + json.dumps(metadata, default=str) + "\n")
        fh.write("re,im\n")
        for z in w:
            fh.write(f"{z.real:.17g},{z.imag:.17g}\n")


def eigenvalues_from_csv(path) -> np.ndarray:
    """Read an ``re,im`` table (one-column rows are taken as real).

    Raises
    ------
    ValueError
        A malformed row; the message carries the 1-based line number.
    """
    vals = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text or text.startswith("#") or text.replace(" ", "").lower() == "re,im":
                continue
            parts = text.split(",")
            try:
                if len(parts) == 1:
                    vals.append(complex(float(parts[0]), 0.0))
                elif len(parts) == 2:
                    vals.append(complex(float(parts[0]), float(parts[1])))
                else:
                    raise ValueError(f"expected 2 columns, got {len(parts)}")
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: cannot parse {text!r} ({exc})") from None
    return np.array(vals, dtype=complex)


def solve_steady_state(model: ModelSpec) -> Operator:
    """Steady state by a sparse linear solve, with one row replaced by the trace condition."""
    L = assemble(model).matrix.tolil()
    d = model.dim
    L[0, :] = vectorize(np.eye(d)).reshape(1, -1)
    b = np.zeros(d * d, dtype=complex)
    b[0] = 1.0
    v = spla.spsolve(L.tocsc(), b)
    if not np.all(np.isfinite(v)):
        raise MultipleSteadyStatesError("singular steady-state system")
    rho = devectorize(v, model.space).dense()
    rho = 0.5 * (rho + rho.conj().T)
    return Operator(model.space, rho / np.trace(rho).real)
