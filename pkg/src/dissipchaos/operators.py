"""Finite-dimensional operator algebra and superoperator (vectorization) helpers.

Vectorization convention
------------------------
Density matrices are vectorized by **column stacking** everywhere in the
package::

    vec(rho)[i + d * j] = rho[i, j]

so that ``vec(A @ rho @ B) = (B.T kron A) @ vec(rho)``. Left eigenoperators
extracted from a superoperator eigendecomposition rely on this convention.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import reduce
from math import prod, isqrt
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from scipy.special import gammaln

from .errors import DimensionError

HERMITIAN_TOL = 1e-10


@dataclass(frozen=True)
class HilbertSpace:
    """Tensor-product space with the local dimension of every factor."""

    factor_dims: tuple[int, ...]

    def __init__(self, factor_dims: Sequence[int] | int):
        if isinstance(factor_dims, (int, np.integer)):
            factor_dims = (int(factor_dims),)
        dims = tuple(int(d) for d in factor_dims)
        if not dims:
            raise DimensionError("factor_dims must be non-empty")
        if any(d < 1 for d in dims):
            raise DimensionError(f"factor dimensions must be positive, got {dims}")
        object.__setattr__(self, "factor_dims", dims)

    @property
    def total_dim(self) -> int:
        return prod(self.factor_dims)

    @property
    def n_factors(self) -> int:
        return len(self.factor_dims)

    def identity(self) -> "Operator":
        return Operator(self, sp.identity(self.total_dim, dtype=complex, format="csr"))

    def basis_state(self, index: int | Sequence[int]) -> np.ndarray:
        """Computational basis vector; ``index`` is flat or per-factor."""
        if not isinstance(index, (int, np.integer)):
            index = int(np.ravel_multi_index(tuple(index), self.factor_dims))
        psi = np.zeros(self.total_dim, dtype=complex)
        psi[index] = 1.0
        return psi


@dataclass(frozen=True, eq=False)
class Operator:
    """Complex matrix acting on ``space``.

    Storage may be dense (``ndarray``) or sparse (CSR); all methods behave
    identically for both. Instances are treated as immutable.
    """

    space: HilbertSpace
    matrix: sp.csr_matrix | np.ndarray

    def __post_init__(self):
        m = self.matrix
        if not sp.issparse(m):
            m = np.asarray(m, dtype=complex)
        elif m.format != "csr" or m.dtype != complex:
            m = sp.csr_matrix(m, dtype=complex)
        n = self.space.total_dim
        if m.ndim != 2 or m.shape != (n, n):
            raise DimensionError(
                f"matrix shape {m.shape} does not match space dimension {n}"
            )
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.space.total_dim

    @property
    def is_sparse(self) -> bool:
        return sp.issparse(self.matrix)

    def dense(self) -> np.ndarray:
        return self.matrix.toarray() if self.is_sparse else np.array(self.matrix)

    def sparse(self) -> sp.csr_matrix:
        return self.matrix if self.is_sparse else sp.csr_matrix(self.matrix)

    def dag(self) -> "Operator":
        return Operator(self.space, self.matrix.conj().T)

    def trace(self) -> complex:
        return complex(self.matrix.diagonal().sum())

    def hermitian_deviation(self) -> float:
        diff = self.matrix - self.matrix.conj().T
        if sp.issparse(diff):
            return float(abs(diff).max()) if diff.nnz else 0.0
        return float(np.max(np.abs(diff))) if diff.size else 0.0

    def is_hermitian(self, tol: float = HERMITIAN_TOL) -> bool:
        return self.hermitian_deviation() <= tol

    def apply(self, psi: np.ndarray) -> np.ndarray:
        return self.matrix @ psi

    def _check(self, other: "Operator"):
        if other.space != self.space:
            raise DimensionError(f"space mismatch: {self.space} vs {other.space}")

    def __add__(self, other: "Operator") -> "Operator":
        self._check(other)
        return Operator(self.space, self.matrix + other.matrix)

    def __sub__(self, other: "Operator") -> "Operator":
        self._check(other)
        return Operator(self.space, self.matrix - other.matrix)

    def __neg__(self) -> "Operator":
        return Operator(self.space, -self.matrix)

    def __mul__(self, scalar) -> "Operator":
        return Operator(self.space, self.matrix * complex(scalar))

    __rmul__ = __mul__

    def __matmul__(self, other: "Operator") -> "Operator":
        self._check(other)
        return Operator(self.space, self.matrix @ other.matrix)

    def __repr__(self):
        kind = "sparse" if self.is_sparse else "dense"
        return f"Operator(dims={self.space.factor_dims}, {kind})"


@dataclass(frozen=True, eq=False)
class SuperOperator:
    """Linear map on vectorized operators (column-stacking convention)."""

    matrix: sp.csr_matrix | np.ndarray

    def __post_init__(self):
        m = self.matrix
        if sp.issparse(m):
            m = sp.csr_matrix(m, dtype=complex)
        else:
            m = np.asarray(m, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DimensionError(f"superoperator must be square, got {m.shape}")
        if isqrt(m.shape[0]) ** 2 != m.shape[0]:
            raise DimensionError(f"superoperator dimension {m.shape[0]} is not a perfect square")
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def hilbert_dim(self) -> int:
        return isqrt(self.dim)

    def dense(self) -> np.ndarray:
        return self.matrix.toarray() if sp.issparse(self.matrix) else np.array(self.matrix)

    def __matmul__(self, other):
        if isinstance(other, SuperOperator):
            return SuperOperator(self.matrix @ other.matrix)
        return self.matrix @ other

    def __add__(self, other: "SuperOperator") -> "SuperOperator":
        return SuperOperator(self.matrix + other.matrix)

    def __mul__(self, scalar) -> "SuperOperator":
        return SuperOperator(self.matrix * complex(scalar))

    __rmul__ = __mul__


# -- builders ---------------------------------------------------------------

def annihilation(dim: int) -> Operator:
    """Truncated bosonic lowering operator on ``dim`` Fock levels."""
    if dim < 2:
        raise DimensionError(f"annihilation operator needs dim >= 2, got {dim}")
    data = np.sqrt(np.arange(1, dim, dtype=float))
    mat = sp.diags(data, offsets=1, shape=(dim, dim), dtype=complex, format="csr")
    return Operator(HilbertSpace(dim), mat)


def number(dim: int) -> Operator:
    mat = sp.diags(np.arange(dim, dtype=float), 0, dtype=complex, format="csr")
    return Operator(HilbertSpace(dim), mat)


def pauli(which: str) -> Operator:
    """Pauli matrices in the basis (|up>, |down>); ``sigma_z |up> = +|up>``.

    ``which`` is one of ``x, y, z, +, -`` with ``sigma_+ = |up><down|``.
    """
    table = {
        "x": [[0, 1], [1, 0]],
        "y": [[0, -1j], [1j, 0]],
        "z": [[1, 0], [0, -1]],
        "+": [[0, 1], [0, 0]],
        "-": [[0, 0], [1, 0]],
    }
    if which not in table:
        raise ValueError(f"unknown Pauli operator {which!r}")
    return Operator(HilbertSpace(2), sp.csr_matrix(np.array(table[which], dtype=complex)))


def embed(op: Operator, site: int, space: HilbertSpace) -> Operator:
    """Place ``op`` on factor ``site`` of ``space``: I x ... x op x ... x I."""
    if not 0 <= site < space.n_factors:
        raise DimensionError(f"site {site} out of range for {space.n_factors} factors")
    local = space.factor_dims[site]
    if op.dim != local:
        raise DimensionError(
            f"operator dimension {op.dim} does not match local dimension {local} at site {site}"
        )
    left = prod(space.factor_dims[:site])
    right = prod(space.factor_dims[site + 1:])
    mat = sp.kron(
        sp.kron(sp.identity(left, dtype=complex), op.sparse()),
        sp.identity(right, dtype=complex),
        format="csr",
    )
    return Operator(space, mat)


def tensor(*ops: Operator) -> Operator:
    space = HilbertSpace([d for op in ops for d in op.space.factor_dims])
    mat = reduce(lambda a, b: sp.kron(a, b, format="csr"), [op.sparse() for op in ops])
    return Operator(space, mat)


def commutator(a: Operator, b: Operator) -> Operator:
    return a @ b - b @ a


def projector(psi: np.ndarray, space: HilbertSpace) -> Operator:
    psi = np.asarray(psi, dtype=complex)
    return Operator(space, np.outer(psi, psi.conj()))


def coherent_state(alpha: complex, dim: int) -> np.ndarray:
    """Fock-truncated coherent state, renormalized after truncation."""
    n = np.arange(dim)
    if alpha == 0:
        psi = np.zeros(dim, dtype=complex)
        psi[0] = 1.0
        return psi
    # log-amplitudes avoid overflow of alpha**n / sqrt(n!) at large n
    logmag = n * np.log(abs(alpha)) - 0.5 * gammaln(n + 1)
    psi = np.exp(logmag - logmag.max()) * np.exp(1j * n * np.angle(alpha))
    return psi / np.linalg.norm(psi)


# -- vectorization ----------------------------------------------------------

def vectorize(rho: Operator | np.ndarray) -> np.ndarray:
    m = rho.dense() if isinstance(rho, Operator) else np.asarray(rho)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionError(f"can only vectorize square matrices, got {m.shape}")
    return m.reshape(-1, order="F").astype(complex, copy=False)


def devectorize(v: np.ndarray, space: HilbertSpace | None = None) -> Operator:
    v = np.asarray(v, dtype=complex)
    d = isqrt(v.shape[0])
    if v.ndim != 1 or d * d != v.shape[0]:
        raise DimensionError(f"vector length {v.shape[0]} is not a perfect square")
    if space is None:
        space = HilbertSpace(d)
    elif space.total_dim != d:
        raise DimensionError(f"vector encodes dim {d}, space has {space.total_dim}")
    return Operator(space, v.reshape(d, d, order="F"))


def _as_sparse(a) -> sp.csr_matrix:
    if isinstance(a, Operator):
        return a.sparse()
    return sp.csr_matrix(a)


def sandwich_superop(a: Operator, b: Operator) -> SuperOperator:
    """rho -> A rho B."""
    a._check(b)
    return SuperOperator(sp.kron(b.sparse().T, a.sparse(), format="csr"))


def left_mult_superop(a: Operator) -> SuperOperator:
    """rho -> A rho."""
    eye = sp.identity(a.dim, dtype=complex)
    return SuperOperator(sp.kron(eye, a.sparse(), format="csr"))


def right_mult_superop(b: Operator) -> SuperOperator:
    """rho -> rho B."""
    eye = sp.identity(b.dim, dtype=complex)
    return SuperOperator(sp.kron(b.sparse().T, eye, format="csr"))
