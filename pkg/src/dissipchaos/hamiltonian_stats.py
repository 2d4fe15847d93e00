"""Closed-system level statistics of the driven Bose-Hubbard Hamiltonian under an energy cutoff."""

from __future__ import annotations

import logging
import warnings
from dataclasses import replace

import numpy as np
import scipy.linalg as sla

from .errors import ConvergenceError
from .models import BoseHubbardParams, apply_thermodynamic_scaling, build_bose_hubbard
from .spectral import RATIO_GOE, RATIO_POISSON_1D, real_spacing_ratios

log = logging.getLogger(__name__)

CONVERGENCE_TOL = 1e-8
CUTOFF_STEP = 2
MAX_HILBERT_DIM = 6000
MIN_RELIABLE_MMAX = 200


def bh_hamiltonian(params: BoseHubbardParams, n_sites: int, N_c: int) -> np.ndarray:
    """Dense Hamiltonian of the boundary-driven chain with ``N_c`` Fock levels above vacuum per site."""
    p = replace(params, n_sites=int(n_sites), cutoff=int(N_c))
    return build_bose_hubbard(p).hamiltonian.dense()


def _lowest(H: np.ndarray, m: int) -> np.ndarray:
    m = min(m, H.shape[0])
    return sla.eigh(H, eigvals_only=True, subset_by_index=[0, m - 1])


def hamiltonian_spectrum(params: BoseHubbardParams, n_sites: int | None = None, N_c: int | None = None,
                         *, M_max: int = 200, tol: float = CONVERGENCE_TOL,
                         N_c_max: int | None = None, max_dim: int = MAX_HILBERT_DIM) -> np.ndarray:
    """Lowest ``M_max`` eigenvalues, converged in the Fock cutoff.

    Starting from ``N_c``, the cutoff grows by ``CUTOFF_STEP`` until the
    lowest ``M_max`` levels change by less than ``tol`` relative (absolute
    below unit magnitude) between consecutive cutoffs.

    Raises
    ------
    ConvergenceError
        The cutoff budget (``N_c_max`` or ``max_dim``) is exhausted first.
    """
    n_sites = params.n_sites if n_sites is None else int(n_sites)
    N_c = params.cutoff if N_c is None else int(N_c)
    if M_max < 3:
        raise ValueError("M_max must be at least 3")
    # the Hilbert space must hold more than M_max states before comparing
    while (N_c + 1) ** n_sites <= M_max:
        N_c += 1
    prev = _lowest(bh_hamiltonian(params, n_sites, N_c), M_max)
    while True:
        nxt = N_c + CUTOFF_STEP
        if (N_c_max is not None and nxt > N_c_max) or (nxt + 1) ** n_sites > max_dim:
            raise ConvergenceError(
                f"lowest {M_max} levels not converged to {tol:g} by N_c={N_c} "
                f"(budget N_c_max={N_c_max}, max_dim={max_dim})")
        cur = _lowest(bh_hamiltonian(params, n_sites, nxt), M_max)
        dev = np.max(np.abs(cur - prev) / np.maximum(np.abs(cur), 1.0))
        log.debug("N_c %d -> %d: max relative change %.3g", N_c, nxt, dev)
        if dev < tol:
            return cur
        prev, N_c = cur, nxt


def sector_spectrum(params: BoseHubbardParams, n_sites: int, N_c: int) -> np.ndarray:
    """Full spectrum at ``F = 0`` assembled from fixed-total-number blocks."""
    if params.F != 0:
        raise ValueError("sector decomposition requires F = 0")
    H = bh_hamiltonian(params, n_sites, N_c)
    occ = np.indices((N_c + 1,) * n_sites).reshape(n_sites, -1)
    total = occ.sum(axis=0)
    out = [np.linalg.eigvalsh(H[np.ix_(idx, idx)])
           for n in np.unique(total) for idx in [np.flatnonzero(total == n)]]
    return np.sort(np.concatenate(out))


def r_statistic(energies, M_max: int | None = None) -> dict:
    """Mean gap ratio over ``{E_j, j < M_max}`` with reference values attached."""
    E = np.sort(np.asarray(energies, dtype=float).ravel())
    if M_max is not None:
        if M_max > E.size:
            raise ValueError(f"M_max={M_max} exceeds the {E.size} available levels")
        E = E[:M_max]
    if E.size < MIN_RELIABLE_MMAX:
        warnings.warn(f"only {E.size} levels below the cutoff; ratio statistic is noisy",
                      RuntimeWarning, stacklevel=2)
    r = real_spacing_ratios(E)
    return {
        "mean_r": float(r.mean()),
        "stderr": float(r.std(ddof=1) / np.sqrt(r.size)) if r.size > 1 else float("nan"),
        "n_levels": int(E.size),
        "reference_poisson": RATIO_POISSON_1D,
        "reference_wigner_dyson": RATIO_GOE,
    }


def r_vs_cutoff_curve(params: BoseHubbardParams, n_sites: int, L_values, M_max_grid,
                      *, N_c: int | None = None, tol: float = CONVERGENCE_TOL,
                      max_dim: int = MAX_HILBERT_DIM) -> list[dict]:
    """``<r>_H`` against ``M_max`` for each thermodynamic-scaling parameter ``L``.

    Rows whose ``M_max`` levels cannot be converged within the budget are
    omitted; a row is reported only where converged levels exist.
    """
    grid = sorted(int(m) for m in M_max_grid)
    rows = []
    for L in L_values:
        pL = apply_thermodynamic_scaling(params, float(L))
        E = None
        for m in reversed(grid):
            try:
                E = hamiltonian_spectrum(pL, n_sites, N_c, M_max=m, tol=tol, max_dim=max_dim)
                break
            except ConvergenceError as exc:
                log.warning("L=%g: %s", L, exc)
        if E is None:
            continue
        for m in grid:
            if m > E.size:
                continue
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                st = r_statistic(E, m)
            rows.append({"L": float(L), "M_max": m, "mean_r": st["mean_r"], "n_levels": st["n_levels"]})
    return rows

