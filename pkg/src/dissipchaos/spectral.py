"""Level statistics for real and complex spectra.

Nearest-neighbour spacings, unfolding (Gaussian-smoothed density in the
complex plane, polynomial staircase fit on the real line), spacing ratios,
bulk filtering, reference distributions and histogram distances.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
from scipy.integrate import quad
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree
from scipy.special import gammaincc, gammaln

log = logging.getLogger(__name__)

DUPLICATE_TOL = 1e-12
SIGMA_FACTOR = 4.5
HIST_BINS = 50
HIST_RANGE = (0.0, 4.0)
GINUE_TRUNCATION = 100
BULK_FACTOR = 10.0
MIN_UNFOLD_POINTS = 100

# reference values of the ratio indicators
RATIO_GINIBRE = 0.74
COS_GINIBRE = 0.24
RATIO_POISSON_2D = 0.66
RATIO_POISSON_1D = 0.386
RATIO_GOE = 0.53
RATIO_GUE = 0.60


@dataclass(frozen=True)
class SpacingSample:
    """Spacings and ratios computed from one spectrum.

    ``ratios`` is complex (``z_j``) for complex spectra and real (``r_j``)
    for real ones. ``unfolded_spacings`` is empty until unfolding is applied.
    """

    raw_spacings: np.ndarray
    unfolded_spacings: np.ndarray = field(default_factory=lambda: np.empty(0))
    ratios: np.ndarray = field(default_factory=lambda: np.empty(0))
    n_source: int = 0
    n_merged: int = 0


@dataclass(frozen=True)
class StatsSummary:
    mean_r: float
    neg_mean_cos_theta: float | None
    hist_edges: np.ndarray
    hist_density: np.ndarray
    n_points: int
    distance_poisson: float | None = None
    distance_chaotic: float | None = None
    metadata: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "mean_r": self.mean_r,
            "neg_mean_cos_theta": self.neg_mean_cos_theta,
            "n_points": self.n_points,
            "distance_poisson": self.distance_poisson,
            "distance_chaotic": self.distance_chaotic,
            "hist_edges": self.hist_edges.tolist(),
            "hist_density": self.hist_density.tolist(),
            **self.metadata,
        }


# -- spacings ----------------------------------------------------------------

def merge_near_duplicates(eigs, rel_tol: float = DUPLICATE_TOL) -> tuple[np.ndarray, int]:
    """Collapse eigenvalues closer than ``rel_tol * spectral radius``.

    Each connected group is replaced by its first member. Returns the reduced
    array (order preserved) and the number of removed points.
    """
    eigs = np.asarray(eigs, dtype=complex).ravel()
    if eigs.size < 2:
        return eigs, 0
    radius = float(np.max(np.abs(eigs)))
    tol = rel_tol * radius if radius > 0 else rel_tol
    pairs = cKDTree(np.column_stack([eigs.real, eigs.imag])).query_pairs(tol, output_type="ndarray")
    if len(pairs) == 0:
        return eigs, 0
    n = eigs.size
    g = sp.coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
    _, labels = connected_components(g, directed=False)
    _, first = np.unique(labels, return_index=True)
    keep = np.sort(first)
    return eigs[keep], n - keep.size


def _neighbours(eigs: np.ndarray, k: int, centers=None):
    """Distances and indices of the ``k`` nearest other points for each center."""
    pts = np.column_stack([eigs.real, eigs.imag])
    q = pts if centers is None else pts[centers]
    dist, idx = cKDTree(pts).query(q, k=k + 1)
    # column 0 is the point itself once duplicates are merged
    return dist[:, 1:], idx[:, 1:]


def complex_nn_spacings(eigs, centers=None, merge: bool = True) -> SpacingSample:
    """``s_j = |lambda_j - lambda_j^NN|`` in the complex plane.

    ``centers`` (boolean mask or indices into the merged array) restricts which
    points report a spacing; neighbours are always searched in the full set.
    """
    eigs = np.asarray(eigs, dtype=complex).ravel()
    n_merged = 0
    if merge:
        eigs, n_merged = merge_near_duplicates(eigs)
    if eigs.size < 3:
        raise ValueError(f"need at least 3 distinct eigenvalues, got {eigs.size}")
    dist, _ = _neighbours(eigs, 1, centers)
    return SpacingSample(raw_spacings=dist[:, 0], n_source=eigs.size, n_merged=n_merged)


def smoothed_density(points: np.ndarray, sigma: float, at: np.ndarray | None = None,
                     chunk: int = 2048) -> np.ndarray:
    """Gaussian-kernel estimate of the normalized eigenvalue density in the complex plane."""
    at = points if at is None else at
    n = points.size
    out = np.empty(at.size)
    for start in range(0, at.size, chunk):
        block = at[start:start + chunk]
        d2 = np.abs(block[:, None] - points[None, :]) ** 2
        out[start:start + chunk] = np.exp(-d2 / (2 * sigma ** 2)).sum(axis=1)
    return out / (2 * np.pi * sigma ** 2 * n)


def unfold_complex(eigs, centers=None, sigma_factor: float = SIGMA_FACTOR,
                   merge: bool = True) -> SpacingSample:
    """Unfolded nearest-neighbour spacings with unit mean.

    The local density is the Gaussian-smoothed spectral density with width
    ``sigma = sigma_factor * mean(s)``; each spacing becomes
    ``s_j sqrt(rho(lambda_j))`` and the sample is rescaled to mean 1.
    """
    eigs = np.asarray(eigs, dtype=complex).ravel()
    n_merged = 0
    if merge:
        eigs, n_merged = merge_near_duplicates(eigs)
    if eigs.size < 3:
        raise ValueError(f"need at least 3 distinct eigenvalues, got {eigs.size}")
    if eigs.size < MIN_UNFOLD_POINTS:
        warnings.warn(f"unfolding only {eigs.size} eigenvalues; statistics are unreliable",
                      RuntimeWarning, stacklevel=2)
    all_s = _neighbours(eigs, 1)[0][:, 0]
    sigma = sigma_factor * all_s.mean()
    if centers is None:
        sel = np.arange(eigs.size)
    else:
        sel = np.flatnonzero(centers) if np.asarray(centers).dtype == bool else np.asarray(centers)
    s = all_s[sel]
    rho = smoothed_density(eigs, sigma, at=eigs[sel])
    scaled = s * np.sqrt(rho)
    unfolded = scaled / scaled.mean()
    return SpacingSample(raw_spacings=s, unfolded_spacings=unfolded,
                         n_source=eigs.size, n_merged=n_merged)


def complex_spacing_ratios(eigs, centers=None, merge: bool = True) -> SpacingSample:
    """``z_j = (lambda^NN - lambda) / (lambda^NNN - lambda)`` per center."""
    eigs = np.asarray(eigs, dtype=complex).ravel()
    n_merged = 0
    if merge:
        eigs, n_merged = merge_near_duplicates(eigs)
    if eigs.size < 3:
        raise ValueError(f"need at least 3 distinct eigenvalues, got {eigs.size}")
    dist, idx = _neighbours(eigs, 2, centers)
    base = eigs if centers is None else eigs[centers]
    z = (eigs[idx[:, 0]] - base) / (eigs[idx[:, 1]] - base)
    return SpacingSample(raw_spacings=dist[:, 0], ratios=z, n_source=eigs.size, n_merged=n_merged)


def ratio_indicators(z: np.ndarray) -> tuple[float, float]:
    """Return ``(<r>, -<cos theta>)`` for complex ratios."""
    z = np.asarray(z)
    if z.size == 0:
        return float("nan"), float("nan")
    r = np.abs(z)
    return float(r.mean()), float(-np.mean(z.real / r))


# -- real spectra -------------------------------------------------------------

def unfold_real(energies, poly_degree: int = 6, check_points: int = 2000) -> np.ndarray:
    """Map sorted energies through a polynomial fit of the level staircase.

    Raises
    ------
    ValueError
        Too few energies for the degree, or the fit is not monotone on the
        data range.
    """
    E = np.sort(np.asarray(energies, dtype=float).ravel())
    if E.size < poly_degree + 2:
        raise ValueError(f"need at least {poly_degree + 2} energies for degree {poly_degree}")
    staircase = np.arange(1, E.size + 1, dtype=float)
    fit = np.polynomial.Polynomial.fit(E, staircase, poly_degree)
    grid = np.linspace(E[0], E[-1], check_points)
    slope = fit.deriv()(grid)
    if np.any(slope < 0):
        raise ValueError(
            f"polynomial staircase fit of degree {poly_degree} is not monotone on the "
            "data range; lower the degree"
        )
    return fit(E)


def real_spacings(unfolded) -> np.ndarray:
    return np.diff(np.sort(np.asarray(unfolded, dtype=float)))


def real_spacing_ratios(energies) -> np.ndarray:
    """``r_j = min(s_j, s_{j-1}) / max(s_j, s_{j-1})`` from consecutive gaps."""
    s = np.diff(np.sort(np.asarray(energies, dtype=float).ravel()))
    if s.size < 2:
        raise ValueError("need at least 3 energies")
    lo = np.minimum(s[1:], s[:-1])
    hi = np.maximum(s[1:], s[:-1])
    ok = hi > 0
    if not ok.any():
        raise ValueError("fully degenerate spectrum: all gap ratios undefined")
    # pairs of vanishing gaps give 0/0 and are dropped
    return lo[ok] / hi[ok]


def mean_real_ratio(energies) -> float:
    return float(real_spacing_ratios(energies).mean())


# -- bulk filtering -----------------------------------------------------------

def default_bulk_epsilon(eigs, factor: float = BULK_FACTOR) -> float:
    """``factor`` times the median |Im| projection of nearest-neighbour displacements.

    Falls back to the median full spacing when the projection median vanishes
    (spectra whose neighbours are aligned with the real axis).
    """
    eigs, _ = merge_near_duplicates(eigs)
    if eigs.size < 3:
        return 0.0
    dist, idx = _neighbours(eigs, 1)
    proj = np.abs((eigs[idx[:, 0]] - eigs).imag)
    med = float(np.median(proj))
    if med == 0:
        med = float(np.median(dist[:, 0]))
    return factor * med


def bulk_filter(eigs, epsilon_im: float | None = None) -> tuple[np.ndarray, int, float]:
    """Drop eigenvalues with ``|Im lambda| < epsilon_im``.

    Returns ``(kept, n_removed, epsilon_used)``.
    """
    eigs = np.asarray(eigs, dtype=complex).ravel()
    if epsilon_im is None:
        epsilon_im = default_bulk_epsilon(eigs)
    if epsilon_im < 0:
        raise ValueError("epsilon_im must be non-negative")
    keep = np.abs(eigs.imag) >= epsilon_im
    return eigs[keep], int((~keep).sum()), float(epsilon_im)


# -- reference distributions --------------------------------------------------

def reference_p2d(s):
    """Spacing density of uncorrelated points in the plane (unit mean)."""
    s = np.asarray(s, dtype=float)
    if np.any(s < 0):
        raise ValueError("spacings must be non-negative")
    return 0.5 * np.pi * s * np.exp(-0.25 * np.pi * s ** 2)


def _ginue_raw(s, K: int = GINUE_TRUNCATION):
    """Product/sum form of the Ginibre spacing density, truncated at ``K``.

    Natural units of this form are those of an eigenvalue density ``1/pi``.
    """
    s = np.atleast_1d(np.asarray(s, dtype=float))
    if np.any(s < 0):
        raise ValueError("spacings must be non-negative")
    if K < 1:
        raise ValueError("truncation K must be >= 1")
    x = s ** 2
    k = np.arange(1, K + 1)
    out = np.zeros_like(s)
    pos = s > 0
    xs = x[pos][:, None]
    Q = gammaincc(1 + k[None, :], xs)
    with np.errstate(divide="ignore"):
        log_prod = np.log(Q).sum(axis=1)
        # Gamma(1+j, x) = j! Q(1+j, x)
        log_terms = (np.log(2.0) + (2 * k[None, :] + 1) * np.log(s[pos])[:, None] - xs
                     - gammaln(k[None, :] + 1) - np.log(Q))
    out[pos] = np.exp(log_prod + np.logaddexp.reduce(log_terms, axis=1))
    return out


@lru_cache(maxsize=8)
def _ginue_mean(K: int) -> float:
    return quad(lambda t: t * _ginue_raw(t, K)[0], 0, 12, limit=200)[0]


def reference_ginue(s, K: int = GINUE_TRUNCATION):
    """Ginibre nearest-neighbour spacing density, rescaled to unit mean spacing."""
    s = np.asarray(s, dtype=float)
    m = _ginue_mean(K)
    out = m * _ginue_raw(m * s.ravel(), K)
    return out.reshape(s.shape) if s.ndim else float(out[0])


# -- histograms ---------------------------------------------------------------

def spacing_histogram(spacings, bins: int = HIST_BINS, range_=HIST_RANGE):
    density, edges = np.histogram(np.asarray(spacings), bins=bins, range=range_, density=True)
    return edges, density


def bin_averaged(reference, edges) -> np.ndarray:
    """Average of a density over each bin, for comparison with a histogram."""
    out = np.empty(len(edges) - 1)
    for i, (a, b) in enumerate(zip(edges[:-1], edges[1:])):
        out[i] = quad(lambda t: float(np.asarray(reference(t))), a, b)[0] / (b - a)
    return out


def distribution_distance(hist_density, reference_density, edges) -> float:
    """L1 distance between two binned densities on the same edges."""
    h = np.asarray(hist_density, dtype=float)
    r = np.asarray(reference_density, dtype=float)
    widths = np.diff(np.asarray(edges, dtype=float))
    if h.shape != r.shape or h.shape != widths.shape:
        raise ValueError("histogram, reference and bin widths must have matching shapes")
    return float(np.sum(np.abs(h - r) * widths))


@lru_cache(maxsize=16)
def _reference_bins(name: str, bins: int, lo: float, hi: float) -> np.ndarray:
    edges = np.linspace(lo, hi, bins + 1)
    ref = reference_p2d if name == "poisson" else reference_ginue
    return bin_averaged(ref, edges)


def reference_histogram(name: str, edges) -> np.ndarray:
    """Bin-averaged ``"poisson"`` (2D) or ``"ginue"`` reference on uniform ``edges``."""
    edges = np.asarray(edges, dtype=float)
    if name not in ("poisson", "ginue"):
        raise ValueError(f"unknown reference {name!r}")
    return _reference_bins(name, len(edges) - 1, float(edges[0]), float(edges[-1]))


# -- summaries ----------------------------------------------------------------

def complex_statistics(
    eigs,
    *,
    bulk: bool = True,
    epsilon_im: float | None = None,
    bins: int = HIST_BINS,
    range_=HIST_RANGE,
    sigma_factor: float = SIGMA_FACTOR,
) -> StatsSummary:
    """Full complex-spectrum summary: ratios, unfolded histogram and distances to references."""
    eigs = np.asarray(eigs, dtype=complex).ravel()
    meta = {"n_input": int(eigs.size)}
    if bulk:
        eigs, n_removed, eps = bulk_filter(eigs, epsilon_im)
        meta.update(bulk_epsilon=eps, n_bulk_removed=n_removed)
    eigs, n_merged = merge_near_duplicates(eigs)
    meta["n_merged"] = n_merged
    if eigs.size < 3:
        raise ValueError(f"only {eigs.size} eigenvalues left after filtering")
    zs = complex_spacing_ratios(eigs, merge=False)
    mean_r, neg_cos = ratio_indicators(zs.ratios)
    unf = unfold_complex(eigs, sigma_factor=sigma_factor, merge=False)
    edges, dens = spacing_histogram(unf.unfolded_spacings, bins, range_)
    return StatsSummary(
        mean_r=mean_r,
        neg_mean_cos_theta=neg_cos,
        hist_edges=edges,
        hist_density=dens,
        n_points=int(eigs.size),
        distance_poisson=distribution_distance(dens, reference_histogram("poisson", edges), edges),
        distance_chaotic=distribution_distance(dens, reference_histogram("ginue", edges), edges),
        metadata=meta,
    )


def real_statistics(energies, *, poly_degree: int = 6, bins: int = HIST_BINS,
                    range_=HIST_RANGE) -> StatsSummary:
    """Ratio statistic and unfolded spacing histogram of a real spectrum."""
    E = np.sort(np.asarray(energies, dtype=float).ravel())
    mean_r = mean_real_ratio(E)
    xi = unfold_real(E, poly_degree)
    edges, dens = spacing_histogram(real_spacings(xi), bins, range_)
    return StatsSummary(mean_r=mean_r, neg_mean_cos_theta=None, hist_edges=edges,
                        hist_density=dens, n_points=int(E.size),
                        metadata={"poly_degree": poly_degree})
