"""Density-matrix diagnostics: moments, purity, fidelity, entanglement-Hamiltonian ratio, OTOC."""

from __future__ import annotations

import logging

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import expm_multiply

from .liouvillian import MAX_SUPEROP_DIM, assemble
from .errors import ResourceGuardError
from .models import ModelSpec
from .operators import HilbertSpace, Operator, annihilation, embed, vectorize, devectorize
from .spectral import real_spacing_ratios

log = logging.getLogger(__name__)

SQRT_CLIP = 1e-14
SUPPORT_TOL = 1e-12


def _dense(x) -> np.ndarray:
    if isinstance(x, Operator):
        return x.dense()
    return np.asarray(x, dtype=complex)


def expectation(rho, op) -> complex:
    """``Tr[rho O]``."""
    r = _dense(rho)
    O = op.matrix if isinstance(op, Operator) else op
    return complex(np.sum((O @ r).diagonal()) if sp.issparse(O) else np.trace(O @ r))


def mode_operator(space: HilbertSpace, site: int) -> Operator:
    return embed(annihilation(space.factor_dims[site]), site, space)


def poisson_deviation(rho, space: HilbertSpace | None = None, site: int = 0) -> float:
    """``<a^dag a^dag a a> - <a^dag a>^2`` for mode ``site``; negative means sub-Poissonian."""
    r = _dense(rho)
    if space is None:
        space = rho.space if isinstance(rho, Operator) else HilbertSpace(r.shape[0])
    a = mode_operator(space, site).sparse()
    ad = a.conj().T
    n = expectation(r, ad @ a).real
    g2 = expectation(r, ad @ ad @ a @ a).real
    return float(g2 - n * n)


def purity(rho) -> float:
    r = _dense(rho)
    return float(np.real(np.vdot(r.conj().T, r)))


def _psd_sqrt(r: np.ndarray) -> np.ndarray:
    w, V = np.linalg.eigh(0.5 * (r + r.conj().T))
    w = np.where(w > SQRT_CLIP, w, 0.0)
    return (V * np.sqrt(w)) @ V.conj().T


def fidelity(rho, sigma) -> float:
    """``(Tr sqrt(sqrt(rho) sigma sqrt(rho)))^2``, clipped to [0, 1]."""
    r, s = _dense(rho), _dense(sigma)
    if r.shape != s.shape:
        raise ValueError("density matrices have different dimensions")
    sr = _psd_sqrt(r)
    M = sr @ s @ sr
    w = np.linalg.eigvalsh(0.5 * (M + M.conj().T))
    # roundoff eigenvalues would otherwise contribute O(sqrt(eps)) each
    w = np.where(w > SQRT_CLIP * max(float(w.max()), 1.0), w, 0.0)
    f = float(np.sum(np.sqrt(w)) ** 2)
    return min(max(f, 0.0), 1.0)


def entanglement_spectrum(rho_ss, support_tol: float = SUPPORT_TOL) -> np.ndarray:
    """Sorted eigenvalues of ``-log rho`` restricted to the support of ``rho``."""
    w = np.linalg.eigvalsh(0.5 * (_dense(rho_ss) + _dense(rho_ss).conj().T))
    keep = w > support_tol * max(w.max(), 0.0)
    if (~keep).sum():
        log.info("entanglement spectrum: excluded %d eigenvalues outside the support", int((~keep).sum()))
    return np.sort(-np.log(w[keep]))


def entanglement_r(rho_ss, support_tol: float = SUPPORT_TOL) -> float:
    """Mean consecutive-gap ratio of the spectrum of ``-log rho_ss``.

    Raises
    ------
    ValueError
        Fewer than three levels on the support, or a fully degenerate spectrum.
    """
    E = entanglement_spectrum(rho_ss, support_tol)
    if E.size < 3:
        raise ValueError(f"need at least 3 levels on the support, got {E.size}")
    return float(real_spacing_ratios(E).mean())


def quadratures(space: HilbertSpace, site: int = 0) -> tuple[Operator, Operator]:
    """``Q = (a + a^dag)/sqrt 2`` and ``P = i (a^dag - a)/sqrt 2``."""
    a = mode_operator(space, site)
    ad = a.dag()
    Q = (a + ad) * (1 / np.sqrt(2))
    P = (ad - a) * (1j / np.sqrt(2))
    return Q, P


def quantum_otoc(model: ModelSpec, rho_in, t: float, tau_grid, *, site: int = 0,
                 force: bool = False) -> dict:
    """``O_t(tau) = -<[Q(t+tau), P(t)]^2>`` through forward/backward master-equation evolution.

    Forward segments use the model's Liouvillian; backward segments use the
    same jumps with ``H -> -H``. Pass ``t = 0`` with ``rho_in = rho_ss`` for
    the steady-state OTOC. No normalization is applied; the closed harmonic
    oscillator gives ``cos^2(Delta tau)``.

    Returns a dict with ``tau``, ``otoc`` (real part), ``imag_residue`` and
    the four terms.
    """
    d2 = model.dim ** 2
    if d2 > MAX_SUPEROP_DIM and not force:
        raise ResourceGuardError(f"superoperator dimension {d2} exceeds guard {MAX_SUPEROP_DIM}")
    Lf = assemble(model).matrix
    Lb = assemble(model.with_reversed_hamiltonian()).matrix
    Q, P = quadratures(model.space, site)
    Qm, Pm = Q.dense(), P.dense()
    space = model.space

    def fwd(X, s):
        return devectorize(expm_multiply(Lf * s, vectorize(X)), space).dense() if s else X

    def bwd(X, s):
        return devectorize(expm_multiply(Lb * s, vectorize(X)), space).dense() if s else X

    rho_t = fwd(_dense(rho_in), float(t))
    taus = np.asarray(tau_grid, dtype=float)
    terms = np.empty((taus.size, 4), dtype=complex)
    for i, tau in enumerate(taus):
        y1 = bwd(Qm @ fwd(Pm @ rho_t, tau) @ Qm, tau)
        y2 = bwd(Qm @ fwd(rho_t @ Pm, tau) @ Qm, tau)
        y3 = bwd(Qm @ fwd(rho_t, tau) @ Qm, tau)
        x4 = fwd(Pm @ rho_t @ Pm, tau)
        terms[i, 0] = np.trace(Pm @ y1)
        terms[i, 1] = np.trace(Pm @ y2)
        terms[i, 2] = np.trace(Pm @ y3 @ Pm)
        terms[i, 3] = np.trace(Qm @ x4 @ Qm)
    O = -(terms[:, 0] + terms[:, 1] - terms[:, 2] - terms[:, 3])
    return {
        "tau": taus,
        "otoc": O.real,
        "imag_residue": float(np.max(np.abs(O.imag))) if O.size else 0.0,
        "terms": terms,
        "t": float(t),
        "normalization": "none",
    }
