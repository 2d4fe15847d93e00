"""Spectral statistics of quantum trajectories.

Trajectory snapshots are expanded in the Liouvillian eigenbasis,
``|psi_m><psi_m| = sum_j c_{m,j} eta_j``. Eigenvalues with ``|c_{m,j}| > c_min``
form the relevant set of trajectory ``m``; level statistics are evaluated on
that set and averaged over trajectories.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from .liouvillian import LiouvillianSpectrum
from .models import ModelSpec
from .operators import coherent_state
from .spectral import (
    HIST_BINS,
    HIST_RANGE,
    bulk_filter,
    complex_spacing_ratios,
    default_bulk_epsilon,
    distribution_distance,
    merge_near_duplicates,
    ratio_indicators,
    reference_histogram,
    spacing_histogram,
    unfold_complex,
)
from .trajectories import run_ensemble

log = logging.getLogger(__name__)

DEFAULT_K = 3
MIN_RELEVANT = 100
WEIGHT_BINS = np.logspace(-12, 0, 121)


@dataclass(frozen=True)
class WeightedSpectrum:
    """Spectral weights of one trajectory snapshot; ``coefficients[j]`` pairs with eigenvalue ``j``."""

    eigenvalues: np.ndarray
    coefficients: np.ndarray
    t: float = 0.0
    trajectory: int = 0

    @property
    def magnitudes(self) -> np.ndarray:
        return np.abs(self.coefficients)


@dataclass(frozen=True)
class CminRule:
    k: int
    c_min: float
    C: float
    sigma_c: float
    hist_edges: np.ndarray = field(repr=False, default=None)
    hist_density: np.ndarray = field(repr=False, default=None)


def pure_state_weights(spec: LiouvillianSpectrum, psi: np.ndarray) -> np.ndarray:
    """``c_j = <psi| sigma_j^dag |psi>`` for one state (d,) or many (d, M) at once."""
    psi = np.asarray(psi, dtype=complex)
    single = psi.ndim == 1
    P = psi[:, None] if single else psi
    P = P / np.linalg.norm(P, axis=0)
    # vec(|psi><psi|) = conj(psi) kron psi under column stacking
    V = (P.conj()[:, None, :] * P[None, :, :]).reshape(-1, P.shape[1])
    C = spec.left.conj().T @ V
    return C[:, 0] if single else C


def trajectory_weights(spec: LiouvillianSpectrum, psi: np.ndarray, t: float = 0.0,
                       trajectory: int = 0) -> WeightedSpectrum:
    return WeightedSpectrum(spec.eigenvalues, pure_state_weights(spec, psi), t, trajectory)


def resolve_cmin(weights, k: int = DEFAULT_K, edges: np.ndarray = WEIGHT_BINS) -> CminRule:
    """``c_min = C - k sigma`` from the binned distribution of all weight magnitudes.

    ``C`` is the mean and ``sigma`` the second central moment of the
    piecewise-constant density ``p(|c|)`` on logarithmic bins over
    ``[1e-12, 1]``; magnitudes outside the range are clipped to its ends.
    The result is floored at zero.
    """
    if isinstance(weights, WeightedSpectrum):
        mags = weights.magnitudes
    elif isinstance(weights, (list, tuple)) and weights and isinstance(weights[0], WeightedSpectrum):
        mags = np.concatenate([w.magnitudes for w in weights])
    else:
        mags = np.abs(np.asarray(weights)).ravel()
    if mags.size == 0:
        raise ValueError("no weights to build p(|c|) from")
    if k < 0:
        raise ValueError("k must be non-negative")
    lo, hi = edges[0], edges[-1]
    density, edges = np.histogram(np.clip(mags, lo, hi), bins=edges, density=True)
    a, b = edges[:-1], edges[1:]
    mass = density * (b - a)
    C = float(np.sum(mass * 0.5 * (a + b)))
    sigma = float(np.sum(density * ((b - C) ** 3 - (a - C) ** 3) / 3.0))
    return CminRule(int(k), max(C - k * sigma, 0.0), C, sigma, edges, density)


def select_relevant(ws: WeightedSpectrum, c_min: float) -> tuple[np.ndarray, np.ndarray]:
    """Indices and eigenvalues with ``|c| > c_min``; ``N_lambda`` is the length."""
    idx = np.flatnonzero(ws.magnitudes > c_min)
    return idx, ws.eigenvalues[idx]


@dataclass
class TrajectoryIndicators:
    n_lambda: int
    n_used: int
    mean_r: float
    neg_mean_cos_theta: float
    unfolded: np.ndarray


def relevant_set_indicators(eigs: np.ndarray, *, bulk: bool = True, epsilon_im: float | None = None,
                            min_points: int = MIN_RELEVANT) -> TrajectoryIndicators:
    """Ratio indicators and unfolded spacings of one relevant set.

    Sets with fewer than ``min_points`` eigenvalues report
    ``-<cos theta> = 0``.
    """
    n_lambda = int(eigs.size)
    sel = eigs
    if bulk:
        sel, _, _ = bulk_filter(sel, epsilon_im)
    sel, _ = merge_near_duplicates(sel)
    if sel.size < 3:
        return TrajectoryIndicators(n_lambda, int(sel.size), float("nan"),
                                    0.0 if n_lambda < min_points else float("nan"), np.empty(0))
    r, negcos = ratio_indicators(complex_spacing_ratios(sel, merge=False).ratios)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        unfolded = unfold_complex(sel, merge=False).unfolded_spacings
    if n_lambda < min_points:
        negcos = 0.0
    return TrajectoryIndicators(n_lambda, int(sel.size), r, negcos, unfolded)


def _mean_se(x) -> tuple[float, float]:
    x = np.asarray(x, dtype=float)
    x = x[np.isfinite(x)]
    if x.size == 0:
        return float("nan"), float("nan")
    se = float(x.std(ddof=1) / np.sqrt(x.size)) if x.size > 1 else float("nan")
    return float(x.mean()), se


@dataclass
class SnapshotStats:
    """SSQT indicators at one snapshot time."""

    t: float
    cmin: CminRule
    n_lambda: np.ndarray
    mean_r: float
    se_r: float
    neg_mean_cos_theta: float
    se_neg_cos: float
    hist_edges: np.ndarray
    hist_density: np.ndarray
    per_trajectory: list
    pooled: dict | None = None
    selected: list | None = None

    @property
    def mean_n_lambda(self) -> float:
        return float(self.n_lambda.mean())

    @property
    def se_n_lambda(self) -> float:
        n = self.n_lambda.size
        return float(self.n_lambda.std(ddof=1) / np.sqrt(n)) if n > 1 else float("nan")

    def record(self) -> dict:
        out = {
            "t": self.t,
            "mean_N_lambda": self.mean_n_lambda,
            "se_N_lambda": self.se_n_lambda,
            "mean_r": self.mean_r,
            "se_mean_r": self.se_r,
            "neg_mean_cos_theta": self.neg_mean_cos_theta,
            "se_neg_mean_cos_theta": self.se_neg_cos,
            "c_min": self.cmin.c_min,
            "C": self.cmin.C,
            "sigma_c": self.cmin.sigma_c,
            "k": self.cmin.k,
            "n_trajectories": int(self.n_lambda.size),
        }
        if self.hist_density is not None and self.hist_density.size:
            out["distance_poisson"] = distribution_distance(
                self.hist_density, reference_histogram("poisson", self.hist_edges), self.hist_edges)
            out["distance_ginue"] = distribution_distance(
                self.hist_density, reference_histogram("ginue", self.hist_edges), self.hist_edges)
        if self.pooled is not None:
            out["pooled"] = self.pooled
        return out


def snapshot_statistics(
    spec: LiouvillianSpectrum,
    states: np.ndarray,
    t: float = 0.0,
    *,
    k: int = DEFAULT_K,
    c_min: float | None = None,
    bulk: bool = True,
    epsilon_im: float | None = None,
    pooled: bool = False,
    keep_selected: bool = False,
    min_points: int = MIN_RELEVANT,
    bins: int = HIST_BINS,
) -> SnapshotStats:
    """SSQT statistics of trajectory states (d, M) at one time.

    ``c_min`` overrides the ``C - k sigma`` rule when given. The bulk-filter
    threshold defaults to the heuristic evaluated on the full spectrum, so
    every trajectory is filtered identically.
    """
    W = pure_state_weights(spec, states)
    mags = np.abs(W)
    rule = resolve_cmin(mags, k)
    if c_min is not None:
        rule = CminRule(rule.k, float(c_min), rule.C, rule.sigma_c, rule.hist_edges, rule.hist_density)
    if bulk and epsilon_im is None:
        epsilon_im = default_bulk_epsilon(spec.eigenvalues)
    per, selected = [], []
    for m in range(W.shape[1]):
        idx = np.flatnonzero(mags[:, m] > rule.c_min)
        eigs = spec.eigenvalues[idx]
        per.append(relevant_set_indicators(eigs, bulk=bulk, epsilon_im=epsilon_im,
                                           min_points=min_points))
        if keep_selected:
            selected.append(idx)
    r, se_r = _mean_se([p.mean_r for p in per])
    c, se_c = _mean_se([p.neg_mean_cos_theta for p in per])
    unfolded = [p.unfolded for p in per if p.unfolded.size]
    if unfolded:
        edges, dens = spacing_histogram(np.concatenate(unfolded), bins, HIST_RANGE)
    else:
        edges, dens = np.linspace(*HIST_RANGE, bins + 1), np.zeros(bins)
    pooled_stats = None
    if pooled:
        union = np.unique(np.concatenate([np.flatnonzero(mags[:, m] > rule.c_min)
                                          for m in range(W.shape[1])]))
        ind = relevant_set_indicators(spec.eigenvalues[union], bulk=bulk, epsilon_im=epsilon_im,
                                      min_points=min_points)
        pooled_stats = {"n_lambda": ind.n_lambda, "mean_r": ind.mean_r,
                        "neg_mean_cos_theta": ind.neg_mean_cos_theta}
    return SnapshotStats(
        t=float(t), cmin=rule, n_lambda=np.array([p.n_lambda for p in per]),
        mean_r=r, se_r=se_r, neg_mean_cos_theta=c, se_neg_cos=se_c,
        hist_edges=edges, hist_density=dens, per_trajectory=per,
        pooled=pooled_stats, selected=selected if keep_selected else None,
    )


def ssqt_statistics(
    spec: LiouvillianSpectrum,
    model: ModelSpec,
    psi0,
    t_snapshots,
    M: int,
    base_seed: int = 0,
    *,
    k: int = DEFAULT_K,
    c_min: float | None = None,
    bulk: bool = True,
    epsilon_im: float | None = None,
    pooled: bool = False,
    keep_selected: bool = False,
    dt: float | None = None,
    propagator: str = "euler",
) -> list[SnapshotStats]:
    """Evolve ``M`` trajectories and compute SSQT indicators at each snapshot time.

    ``c_min`` is resolved separately at each snapshot from that snapshot's
    weight distribution unless a fixed value is given.
    """
    if spec.space.total_dim != model.dim:
        raise ValueError("spectrum and model act on different spaces")
    res = run_ensemble(model, psi0, t_snapshots, M, base_seed, dt=dt, propagator=propagator,
                       store_states=True, record_jumps=False)
    out = []
    for i, t in enumerate(res.times):
        out.append(snapshot_statistics(spec, res.states[i], t, k=k, c_min=c_min, bulk=bulk,
                                       epsilon_im=epsilon_im, pooled=pooled,
                                       keep_selected=keep_selected))
    return out


def n_lambda_series(
    spec: LiouvillianSpectrum,
    model: ModelSpec,
    psi0,
    t_grid,
    M: int,
    base_seed: int = 0,
    *,
    k: int = DEFAULT_K,
    c_min: float | None = None,
    dt: float | None = None,
    propagator: str = "euler",
) -> dict:
    """Mean and standard error of ``N_lambda(t)``.

    One cutoff is used for the whole series: ``c_min`` if given, otherwise the
    ``C - k sigma`` rule at the last grid time (the latest, most relaxed
    snapshot).
    """
    res = run_ensemble(model, psi0, t_grid, M, base_seed, dt=dt, propagator=propagator,
                       store_states=True, record_jumps=False)
    mags = [np.abs(pure_state_weights(spec, res.states[i])) for i in range(len(res.times))]
    rule = resolve_cmin(mags[-1], k)
    cut = rule.c_min if c_min is None else float(c_min)
    counts = np.array([(m > cut).sum(axis=0) for m in mags])
    se = counts.std(axis=1, ddof=1) / np.sqrt(M) if M > 1 else np.full(len(counts), np.nan)
    return {"times": res.times, "mean": counts.mean(axis=1), "se": se, "counts": counts,
            "c_min": cut}


# -- initial-state families ---------------------------------------------------

def default_alpha(delta: float, F: float, gamma: float, scale: float = 3.0) -> complex:
    """``scale * sqrt(F / (delta - i gamma))`` on the principal branch."""
    return complex(scale * np.sqrt(complex(F) / complex(delta, -gamma)))


def coherent_product(model: ModelSpec, alpha: complex) -> np.ndarray:
    """``|alpha> x |alpha> x ...`` on the bosonic factors of ``model``."""
    psi = np.ones(1, dtype=complex)
    for d in model.space.factor_dims:
        psi = np.kron(psi, coherent_state(alpha, d))
    return psi


def fock_product_sampler(model: ModelSpec, n_max: int = 5):
    """Sampler of ``|n> x |n>`` with ``n`` uniform on ``[0, n_max]`` (clipped to the cutoff)."""
    dims = model.space.factor_dims
    top = min(n_max, min(dims) - 1)

    def draw(rng: np.random.Generator) -> np.ndarray:
        n = int(rng.integers(0, top + 1))
        return model.space.basis_state([n] * len(dims))

    return draw


def random_state_sampler(model: ModelSpec):
    """Sampler of Haar-random pure states (normalized complex Gaussian vectors)."""
    d = model.dim

    def draw(rng: np.random.Generator) -> np.ndarray:
        v = rng.normal(size=d) + 1j * rng.normal(size=d)
        return v / np.linalg.norm(v)

    return draw
