"""Command-line entry point: ``dissipchaos <subcommand> ...``.

Exit codes: 0 success, 2 usage error, 3 numerical failure, 4 resource-guard refusal.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import itertools
import json
import logging
import math
import multiprocessing as mp
import re
import sys
from concurrent.futures import ProcessPoolExecutor
from contextlib import nullcontext
from pathlib import Path

import numpy as np

from . import __version__
from . import liouvillian as lv
from . import spectral as spc
from . import trajectories as trj
from .cache import cached_spectrum, load_spectrum
from .classical import ChainParams, LyapunovConfig, default_dt, lyapunov_max, semiclassical_otoc
from .config import ConfigError, load_config, model_from_config, task_options
from .errors import NumericalError, ResourceGuardError
from .hamiltonian_stats import CONVERGENCE_TOL, r_vs_cutoff_curve
from .models import BoseHubbardParams
from .observables import poisson_deviation, quantum_otoc
from .ssqt import (
    DEFAULT_K,
    coherent_product,
    default_alpha,
    fock_product_sampler,
    random_state_sampler,
    ssqt_statistics,
)

log = logging.getLogger("dissipchaos")

EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL, EXIT_GUARD = 0, 2, 3, 4

MODEL_FLAGS = ("delta", "F", "J", "U", "gamma", "n_sites", "cutoff", "L", "N", "anisotropy")

SSQT_DEFAULTS = {"t": [50.0], "trajectories": 30, "k": DEFAULT_K, "dt": None, "seed": 0,
                 "initial": "coherent", "alpha": None, "c_min": None, "pooled": False,
                 "propagator": "euler", "bulk_eps": None}
CLASSICAL_DEFAULTS = {"epsilon": 1e-8, "dt": None, "n_transient": 10_000, "n_sample": 1_000_000,
                      "n_blocks": 50, "zero_sigmas": 3.0, "alpha0": None}
TWA_DEFAULTS = {"trajectories": 1000, "t_relax": None, "dt": None, "seed": 0, "epsilon": 0.01}
OTOC_DEFAULTS = {"t": 0.0, "tau_max": 1.0, "n_tau": 51, "initial": "steady", "site": 0}
HSTATS_DEFAULTS = {"L_values": [1.0, 2.0, 4.0], "M_max": [50, 100, 150, 200], "N_c": None,
                   "tol": CONVERGENCE_TOL}
STATS_DEFAULTS = {"bulk_eps": None, "unfold": spc.SIGMA_FACTOR, "real": False, "bins": spc.HIST_BINS}

SWEEP_TASKS = ("ssqt", "lyapunov", "twa-otoc", "deltan")
GRID_ALIASES = {"Δ": "delta", "Delta": "delta", "γ": "gamma"}


class UsageError(ValueError):
    pass


# -- output helpers ----------------------------------------------------------------

def _jsonable(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (np.floating, np.integer, np.bool_)):
        return x.item()
    if isinstance(x, complex):
        return [x.real, x.imag]
    if isinstance(x, Path):
        return str(x)
    raise TypeError(f"not JSON serializable: {type(x).__name__}")


def tolerances() -> dict:
    return {
        "tie_tol": lv.TIE_TOL, "zero_tol": lv.ZERO_TOL, "positivity_tol": lv.POSITIVITY_TOL,
        "min_overlap": lv.MIN_OVERLAP, "max_cluster_cond": lv.MAX_CLUSTER_COND,
        "max_superop_dim": lv.MAX_SUPEROP_DIM, "duplicate_tol": spc.DUPLICATE_TOL,
        "sigma_factor": spc.SIGMA_FACTOR, "bulk_factor": spc.BULK_FACTOR,
        "hist_bins": spc.HIST_BINS, "hist_range": list(spc.HIST_RANGE),
        "dp_max": trj.DP_MAX, "cutoff_pop_tol": trj.CUTOFF_POP_TOL,
    }


def metadata(args, config: dict, **extra) -> dict:
    return {"command": args.command, "argv": getattr(args, "argv", None), "version": __version__,
            "config": config, "tolerances": tolerances(), **extra}


def write_json(path, payload: dict) -> None:
    text = json.dumps(payload, indent=2, default=_jsonable)
    if path is None or str(path) == "-":
        sys.stdout.write(text + "\n")
        return
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(text + "\n")
    log.info("wrote %s", path)


def write_csv(path, rows: list[dict], meta: dict, columns: list[str] | None = None) -> None:
    """CSV table with the metadata on a leading ``# {json}`` comment line."""
    columns = columns or (list(rows[0]) if rows else [])
    fh = sys.stdout if path is None or str(path) == "-" else open(path, "w", newline="")
    try:
        fh.write("# " + json.dumps(meta, default=_jsonable) + "\n")
        w = csv.DictWriter(fh, fieldnames=columns, extrasaction="ignore")
        w.writeheader()
        for r in rows:
            w.writerow({k: _jsonable(v) if isinstance(v, np.generic) else v for k, v in r.items()})
    finally:
        if fh is not sys.stdout:
            fh.close()
            log.info("wrote %s", path)


# -- argument plumbing ------------------------------------------------------------

def _float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _complex_list(text: str) -> list[complex]:
    try:
        return [complex(x.replace(" ", "")) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated complex numbers, got {text!r}") from None


def _add_model_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("model")
    g.add_argument("--config", help="TOML configuration file (or a previous JSON output)")
    g.add_argument("--model", choices=["kerr", "bose-hubbard", "spin-chain", "random"])
    g.add_argument("--delta", type=float)
    g.add_argument("--F", type=float, dest="F")
    g.add_argument("--J", type=float, dest="J")
    g.add_argument("--U", type=float, dest="U")
    g.add_argument("--gamma", type=float)
    g.add_argument("--n-sites", type=int, dest="n_sites")
    g.add_argument("--cutoff", type=int, help="Fock cutoff N_c")
    g.add_argument("--L", type=int, dest="L", help="spin-chain length")
    g.add_argument("--N", type=int, dest="N", help="random-Liouvillian dimension")
    g.add_argument("--anisotropy", type=float)
    g.add_argument("--model-seed", type=int, help="seed of the random Liouvillian")
    g.add_argument("--cache-dir", help="eigenbasis cache directory (default: $DISSIPCHAOS_CACHE_DIR)")
    g.add_argument("--force-large", action="store_true", help="bypass the memory guard")


def _model_overrides(args) -> dict:
    out = {k: getattr(args, k, None) for k in MODEL_FLAGS}
    if getattr(args, "model_seed", None) is not None:
        out["seed"] = args.model_seed
    return {k: v for k, v in out.items() if v is not None}


def _resolve_model(args, cfg: dict, default_type: str | None = None):
    mtype = args.model or cfg.get("model", {}).get("type") or default_type
    return model_from_config(cfg, mtype, _model_overrides(args))


def _chain_params(rec) -> ChainParams:
    if not isinstance(rec, BoseHubbardParams):
        raise UsageError("this command needs a kerr or bose-hubbard model")
    return ChainParams(rec.delta, rec.F, rec.J, rec.U, rec.gamma, rec.n_sites)


def _initial_state(kind: str, model, rec, alpha):
    if kind == "coherent":
        if not isinstance(rec, BoseHubbardParams):
            raise UsageError("coherent initial states need a bosonic model")
        a = default_alpha(rec.delta, rec.F, rec.gamma) if alpha is None else complex(alpha)
        return coherent_product(model, a), {"alpha": [a.real, a.imag]}
    if kind == "fock":
        return fock_product_sampler(model), {}
    if kind == "random":
        return random_state_sampler(model), {}
    raise UsageError(f"unknown initial-state family {kind!r}")


# -- subcommands -------------------------------------------------------------------

def cmd_spectrum(args) -> int:
    cfg = load_config(args.config)
    model, rec, resolved = _resolve_model(args, cfg)
    spec = cached_spectrum(model, args.cache_dir, force=args.force_large)
    meta = metadata(args, {"model": resolved}, model_hash=model.hash(), n=spec.size,
                    steady_index=spec.steady_index, biorthogonality_error=spec.biorthogonality_error())
    out = args.out or f"eigenvalues_{model.hash()[:12]}.csv"
    lv.eigenvalues_to_csv(out, spec.eigenvalues, meta)
    log.info("wrote %s (%d eigenvalues)", out, spec.size)
    return EXIT_OK


def cmd_stats(args) -> int:
    cfg = load_config(args.config) if args.config else {}
    opts = task_options(cfg, "stats", {"bulk_eps": args.bulk_eps, "unfold": args.unfold,
                                       "real": args.real or None, "bins": args.bins}, STATS_DEFAULTS)
    if args.input:
        eigs, source = lv.eigenvalues_from_csv(args.input), str(args.input)
    else:
        eigs, source = load_spectrum(args.from_cache).eigenvalues, str(args.from_cache)
    if opts["real"]:
        s = spc.real_statistics(eigs.real, bins=opts["bins"])
    else:
        eps = opts["bulk_eps"]
        bulk = eps is None or eps > 0
        s = spc.complex_statistics(eigs, bulk=bulk, epsilon_im=eps if bulk else None,
                                   bins=opts["bins"], sigma_factor=opts["unfold"])
    centers = 0.5 * (s.hist_edges[1:] + s.hist_edges[:-1])
    hist = {"edges": s.hist_edges, "centers": centers, "density": s.hist_density}
    result = {"mean_r": s.mean_r, "neg_mean_cos_theta": s.neg_mean_cos_theta, "n": s.n_points,
              "histogram": hist}
    if not opts["real"]:
        hist["reference_poisson"] = spc.reference_histogram("poisson", s.hist_edges)
        hist["reference_ginue"] = spc.reference_histogram("ginue", s.hist_edges)
        result.update(distance_poisson=s.distance_poisson, distance_ginue=s.distance_chaotic)
    result.update(s.metadata)
    write_json(args.out, {"metadata": metadata(args, {"stats": opts}, source=source), "result": result})
    return EXIT_OK


def _ssqt_opts(args, cfg):
    cli = {"t": args.t, "trajectories": args.trajectories, "k": args.k, "dt": args.dt,
           "seed": args.seed, "initial": args.initial, "alpha": args.alpha, "c_min": args.c_min,
           "pooled": args.pooled or None, "propagator": args.propagator, "bulk_eps": args.bulk_eps}
    opts = task_options(cfg, "ssqt", cli, SSQT_DEFAULTS)
    if int(opts["trajectories"]) < 1:
        raise UsageError("--trajectories must be at least 1")
    return opts


def run_ssqt(model, rec, opts: dict, cache_dir=None, force=False, lock=None):
    with lock or nullcontext():
        spec = cached_spectrum(model, cache_dir, force=force)
    alpha = opts["alpha"]
    if isinstance(alpha, list):
        alpha = complex(*alpha)
    psi0, init_meta = _initial_state(opts["initial"], model, rec, alpha)
    eps = opts["bulk_eps"]
    snaps = ssqt_statistics(spec, model, psi0, opts["t"], int(opts["trajectories"]), int(opts["seed"]),
                            k=int(opts["k"]), c_min=opts["c_min"], bulk=eps is None or eps > 0,
                            epsilon_im=eps if eps else None, pooled=bool(opts["pooled"]),
                            dt=opts["dt"], propagator=opts["propagator"])
    dt = opts["dt"] if opts["dt"] is not None else trj.safe_dt(model)
    return snaps, {"initial_state": init_meta, "dt": dt, "model_hash": model.hash()}


def cmd_ssqt(args) -> int:
    cfg = load_config(args.config)
    model, rec, resolved = _resolve_model(args, cfg, "bose-hubbard")
    opts = _ssqt_opts(args, cfg)
    snaps, extra = run_ssqt(model, rec, opts, args.cache_dir, args.force_large)
    records = []
    for s in snaps:
        r = s.record()
        r["classification"] = classify_ssqt(r)
        records.append(r)
    meta = metadata(args, {"model": resolved, "ssqt": opts}, seeds={"base_seed": opts["seed"],
                    "trajectory_streams": "SeedSequence(base_seed, spawn_key=(m,))"}, **extra)
    write_json(args.out, {"metadata": meta, "snapshots": records})
    return EXIT_OK


def classify_ssqt(rec: dict) -> str:
    """Label a snapshot by the nearer of the two reference indicator pairs."""
    if rec["mean_N_lambda"] < 100:
        return "regular"
    r, c = rec["mean_r"], rec["neg_mean_cos_theta"]
    d_chaos = math.hypot(r - spc.RATIO_GINIBRE, c - spc.COS_GINIBRE)
    d_poisson = math.hypot(r - spc.RATIO_POISSON_2D, c)
    return "chaotic" if d_chaos < d_poisson else "regular"


def _classical_opts(args, cfg):
    cli = {"epsilon": args.epsilon, "dt": args.dt, "n_transient": args.n_transient,
           "n_sample": args.n_sample, "n_blocks": args.n_blocks, "zero_sigmas": args.zero_sigmas,
           "alpha0": None if args.alpha0 is None else [[z.real, z.imag] for z in args.alpha0]}
    return task_options(cfg, "classical", cli, CLASSICAL_DEFAULTS)


def run_lyapunov(params: ChainParams, opts: dict):
    dt = opts["dt"] if opts["dt"] is not None else default_dt(params.U)
    lc = LyapunovConfig(epsilon=float(opts["epsilon"]), dt=float(dt), n_transient=int(opts["n_transient"]),
                        n_sample=int(opts["n_sample"]), n_blocks=int(opts["n_blocks"]))
    a0 = (np.zeros(params.n_sites, complex) if opts["alpha0"] is None
          else np.array([complex(*z) for z in opts["alpha0"]]))
    return lyapunov_max(a0, params, lc, zero_sigmas=float(opts["zero_sigmas"]))


def cmd_classical(args) -> int:
    cfg = load_config(args.config)
    _, rec, resolved = _resolve_model(args, cfg, "bose-hubbard")
    opts = _classical_opts(args, cfg)
    res = run_lyapunov(_chain_params(rec), opts)
    result = {"exponent": res.exponent, "stderr": res.stderr, "classification": res.classification,
              "limit_cycle": res.classification == "zero", "n_reperturbed": res.n_reperturbed}
    meta = metadata(args, {"model": resolved, "classical": opts}, lyapunov_config=res.config)
    write_json(args.out, {"metadata": meta, "result": result})
    return EXIT_OK


def _twa_opts(args, cfg):
    cli = {"trajectories": args.trajectories, "t_relax": args.t_relax, "dt": args.dt,
           "seed": args.seed, "epsilon": args.epsilon}
    opts = task_options(cfg, "twa", cli, TWA_DEFAULTS)
    if int(opts["trajectories"]) < 2:
        raise UsageError("--trajectories must be at least 2")
    return opts


def run_twa(params: ChainParams, opts: dict):
    eps = float(opts["epsilon"]) * (1 + 1j) / math.sqrt(2)
    return semiclassical_otoc(params, int(opts["trajectories"]), t_relax=opts["t_relax"], epsilon=eps,
                              dt=opts["dt"], base_seed=int(opts["seed"]))


def cmd_twa(args) -> int:
    cfg = load_config(args.config)
    _, rec, resolved = _resolve_model(args, cfg, "bose-hubbard")
    opts = _twa_opts(args, cfg)
    res = run_twa(_chain_params(rec), opts)
    rec_out = res.record()
    meta = metadata(args, {"model": resolved, "twa": opts},
                    seeds={"base_seed": opts["seed"]},
                    t_relax=rec_out.pop("t_relax"), dt=rec_out.pop("dt"),
                    epsilon=rec_out.pop("epsilon"))
    rec_out.pop("base_seed", None)
    rec_out.pop("params", None)
    write_json(args.out, {"metadata": meta, "result": rec_out})
    return EXIT_OK


def cmd_otoc(args) -> int:
    cfg = load_config(args.config)
    model, rec, resolved = _resolve_model(args, cfg, "kerr")
    opts = task_options(cfg, "otoc", {"t": args.t, "tau_max": args.tau_max, "n_tau": args.n_tau,
                                      "initial": args.initial, "site": args.site}, OTOC_DEFAULTS)
    if opts["initial"] == "steady":
        rho = lv.solve_steady_state(model)
    elif opts["initial"] == "vacuum":
        v = model.space.basis_state(0)
        rho = np.outer(v, v.conj())
    else:
        raise UsageError(f"unknown initial state {opts['initial']!r}")
    taus = np.linspace(0.0, float(opts["tau_max"]), int(opts["n_tau"]))
    res = quantum_otoc(model, rho, float(opts["t"]), taus, site=int(opts["site"]), force=args.force_large)
    rows = [{"tau": t, "otoc": o} for t, o in zip(res["tau"], res["otoc"])]
    meta = metadata(args, {"model": resolved, "otoc": opts}, imag_residue=res["imag_residue"],
                    normalization=res["normalization"])
    write_csv(args.out, rows, meta, ["tau", "otoc"])
    return EXIT_OK


def cmd_hstats(args) -> int:
    cfg = load_config(args.config)
    _, rec, resolved = _resolve_model(args, cfg, "bose-hubbard")
    if not isinstance(rec, BoseHubbardParams):
        raise UsageError("hstats needs a bose-hubbard model")
    opts = task_options(cfg, "hstats", {"L_values": args.L_values, "M_max": args.M_max,
                                        "N_c": args.N_c, "tol": args.tol}, HSTATS_DEFAULTS)
    rows = r_vs_cutoff_curve(rec, rec.n_sites, opts["L_values"], opts["M_max"],
                             N_c=opts["N_c"], tol=float(opts["tol"]))
    write_csv(args.out, rows, metadata(args, {"model": resolved, "hstats": opts}),
              ["L", "M_max", "mean_r", "n_levels"])
    return EXIT_OK


# -- sweep -------------------------------------------------------------------------

def parse_grid(text: str) -> dict[str, np.ndarray]:
    """``"delta=a:b:n,F=c:d:m"`` -> ordered axes of ``n`` and ``m`` equally spaced values."""
    axes = {}
    for part in filter(None, (p.strip() for p in text.split(","))):
        m = re.fullmatch(r"([^=]+)=([^:]+):([^:]+):(\d+)", part)
        if not m:
            raise UsageError(f"bad grid axis {part!r}; expected name=start:stop:count")
        name = GRID_ALIASES.get(m.group(1).strip(), m.group(1).strip())
        try:
            lo, hi, n = float(m.group(2)), float(m.group(3)), int(m.group(4))
        except ValueError:
            raise UsageError(f"bad numbers in grid axis {part!r}") from None
        if n < 1:
            raise UsageError(f"grid axis {name} needs at least one point")
        axes[name] = np.linspace(lo, hi, n)
    if not axes:
        raise UsageError("empty grid")
    return axes


_LOCK = None


def _init_worker(lock, level):
    global _LOCK
    _LOCK = lock
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def sweep_point(task: str, cfg: dict, mtype: str, overrides: dict, opts: dict,
                cache_dir=None, force=False) -> dict:
    """Evaluate one grid point; returns a flat row of scalars."""
    model, rec, _ = model_from_config(cfg, mtype, overrides)
    if task == "ssqt":
        o = dict(opts, t=[opts["t"][0]])
        snaps, _ = run_ssqt(model, rec, o, cache_dir, force, _LOCK)
        r = snaps[0].record()
        return {"t": r["t"], "mean_N_lambda": r["mean_N_lambda"], "mean_r": r["mean_r"],
                "se_mean_r": r["se_mean_r"], "neg_mean_cos_theta": r["neg_mean_cos_theta"],
                "se_neg_mean_cos_theta": r["se_neg_mean_cos_theta"], "c_min": r["c_min"]}
    if task == "lyapunov":
        res = run_lyapunov(_chain_params(rec), opts)
        return {"exponent": res.exponent, "stderr": res.stderr, "classification": res.classification}
    if task == "twa-otoc":
        res = run_twa(_chain_params(rec), opts)
        return {"D_ss": res.D_ss, "stderr": res.stderr, "D_ss_summed": res.D_ss_summed}
    if task == "deltan":
        rho = lv.solve_steady_state(model)
        return {"delta_n": poisson_deviation(rho, model.space, 0)}
    raise UsageError(f"unknown sweep task {task!r}")


def _point_key(task, mtype, overrides, opts) -> str:
    blob = json.dumps([task, mtype, overrides, opts], sort_keys=True, default=_jsonable)
    return hashlib.sha256(blob.encode()).hexdigest()[:20]


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    axes = parse_grid(args.grid)
    mtype = args.model or cfg.get("model", {}).get("type") or "bose-hubbard"
    base = _model_overrides(args)
    if args.task == "ssqt":
        opts = _ssqt_opts(args, cfg)
    elif args.task == "lyapunov":
        opts = _classical_opts(args, cfg)
    elif args.task == "twa-otoc":
        opts = _twa_opts(args, cfg)
    else:
        opts = {}
    # validate the base model before launching anything
    model_from_config(cfg, mtype, base)

    out = Path(args.out)
    state = Path(args.state_dir) if args.state_dir else out.with_name(out.name + ".points")
    state.mkdir(parents=True, exist_ok=True)
    names = list(axes)
    points = [dict(zip(names, map(float, vals))) for vals in itertools.product(*axes.values())]
    keys = [_point_key(args.task, mtype, {**base, **p}, opts) for p in points]
    done = {k for k in keys if (state / f"{k}.json").exists()}
    todo = [(p, k) for p, k in zip(points, keys) if k not in done]
    log.info("sweep: %d points, %d cached, %d to compute", len(points), len(done), len(todo))
    for k in done:
        log.debug("sweep cache hit %s", k)

    def store(k, p, row):
        tmp = state / f"{k}.json.tmp"
        tmp.write_text(json.dumps({"point": p, "row": row}, default=_jsonable))
        tmp.replace(state / f"{k}.json")

    if args.jobs <= 1:
        for p, k in todo:
            store(k, p, sweep_point(args.task, cfg, mtype, {**base, **p}, opts, args.cache_dir,
                                    args.force_large))
    else:
        ctx = mp.get_context("spawn")
        lock = ctx.Manager().Lock()
        with ProcessPoolExecutor(args.jobs, mp_context=ctx, initializer=_init_worker,
                                 initargs=(lock, log.getEffectiveLevel())) as ex:
            futs = {ex.submit(sweep_point, args.task, cfg, mtype, {**base, **p}, opts,
                              args.cache_dir, args.force_large): (p, k) for p, k in todo}
            for f, (p, k) in futs.items():
                store(k, p, f.result())

    rows = []
    for p, k in zip(points, keys):
        rec = json.loads((state / f"{k}.json").read_text())
        rows.append({**p, **rec["row"]})
    cols = names + [c for c in rows[0] if c not in names] if rows else names
    cfg_out = {"model": {"type": mtype, **base}, "sweep": {"task": args.task, "grid": args.grid},
               args.task: opts}
    write_csv(out, rows, metadata(args, cfg_out, n_points=len(points), n_cached=len(done)), cols)
    return EXIT_OK


# -- parser ------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dissipchaos", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="count", default=0)
    p.add_argument("-q", "--quiet", action="store_true")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("spectrum", help="diagonalize a Liouvillian; write eigenvalue CSV and cache")
    _add_model_args(s)
    s.add_argument("--out", help="eigenvalue CSV path")
    s.set_defaults(func=cmd_spectrum)

    s = sub.add_parser("stats", help="complex-spectrum statistics summary")
    src = s.add_mutually_exclusive_group(required=True)
    src.add_argument("--input", help="eigenvalue CSV (re,im)")
    src.add_argument("--from-cache", help="binary eigenbasis cache file")
    s.add_argument("--config")
    s.add_argument("--bulk-eps", type=float, help="bulk filter |Im| threshold; 0 disables filtering")
    s.add_argument("--unfold", type=float, help="Gaussian unfolding width factor")
    s.add_argument("--bins", type=int)
    s.add_argument("--real", action="store_true", help="treat the input as a real (Hamiltonian) spectrum")
    s.add_argument("--out", help="JSON output path (default stdout)")
    s.set_defaults(func=cmd_stats)

    def traj_args(s):
        s.add_argument("--t", type=_float_list, help="snapshot times, comma-separated")
        s.add_argument("--trajectories", "-M", type=int)
        s.add_argument("--k", type=int)
        s.add_argument("--c-min", type=float)
        s.add_argument("--dt", type=float)
        s.add_argument("--seed", type=int)
        s.add_argument("--initial", choices=["coherent", "fock", "random"])
        s.add_argument("--alpha", type=complex, help="coherent amplitude")
        s.add_argument("--pooled", action="store_true")
        s.add_argument("--propagator", choices=list(trj.PROPAGATORS))
        s.add_argument("--bulk-eps", type=float)

    s = sub.add_parser("ssqt", help="spectral statistics of quantum trajectories")
    _add_model_args(s)
    traj_args(s)
    s.add_argument("--out")
    s.set_defaults(func=cmd_ssqt)

    def classical_args(s, with_dt=True):
        s.add_argument("--epsilon", type=float)
        if with_dt:
            s.add_argument("--dt", type=float)
        s.add_argument("--n-transient", type=int)
        s.add_argument("--n-sample", type=int)
        s.add_argument("--n-blocks", type=int)
        s.add_argument("--zero-sigmas", type=float)
        s.add_argument("--alpha0", type=_complex_list, help="initial amplitudes, comma-separated")

    s = sub.add_parser("classical", help="largest Lyapunov exponent of the mean-field dynamics")
    _add_model_args(s)
    classical_args(s)
    s.add_argument("--out")
    s.set_defaults(func=cmd_classical)

    s = sub.add_parser("twa", help="semiclassical OTOC from truncated-Wigner replicas")
    _add_model_args(s)
    s.add_argument("--trajectories", "-M", type=int)
    s.add_argument("--t-relax", type=float)
    s.add_argument("--dt", type=float)
    s.add_argument("--seed", type=int)
    s.add_argument("--epsilon", type=float, help="replica offset magnitude")
    s.add_argument("--out")
    s.set_defaults(func=cmd_twa)

    s = sub.add_parser("otoc", help="quantum OTOC from forward/backward master-equation evolution")
    _add_model_args(s)
    s.add_argument("--t", type=float)
    s.add_argument("--tau-max", type=float)
    s.add_argument("--n-tau", type=int)
    s.add_argument("--initial", choices=["steady", "vacuum"])
    s.add_argument("--site", type=int)
    s.add_argument("--out")
    s.set_defaults(func=cmd_otoc)

    s = sub.add_parser("hstats", help="Hamiltonian <r> against the energy cutoff")
    _add_model_args(s)
    s.add_argument("--L-values", type=_float_list, dest="L_values")
    s.add_argument("--M-max", type=_int_list, dest="M_max")
    s.add_argument("--N-c", type=int, dest="N_c", help="starting Fock cutoff of the convergence loop")
    s.add_argument("--tol", type=float)
    s.add_argument("--out")
    s.set_defaults(func=cmd_hstats)

    s = sub.add_parser("sweep", help="resumable parameter sweep")
    _add_model_args(s)
    s.add_argument("--grid", required=True, help='e.g. "delta=-4:8:13,F=1:5:5"')
    s.add_argument("--task", required=True, choices=SWEEP_TASKS)
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--out", required=True)
    s.add_argument("--state-dir", help="per-point result directory (default: <out>.points)")
    traj_args(s)
    s.add_argument("--t-relax", type=float)
    s.add_argument("--epsilon", type=float)
    s.add_argument("--n-transient", type=int)
    s.add_argument("--n-sample", type=int)
    s.add_argument("--n-blocks", type=int)
    s.add_argument("--zero-sigmas", type=float)
    s.add_argument("--alpha0", type=_complex_list)
    s.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    args.argv = argv
    level = logging.WARNING if args.quiet else (logging.DEBUG if args.verbose else logging.INFO)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", force=True)
    try:
        return args.func(args)
    except ResourceGuardError as exc:
        log.error("resource guard: %s", exc)
        return EXIT_GUARD
    except NumericalError as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERICAL
    except (ConfigError, UsageError, ValueError, FileNotFoundError) as exc:
        log.error("%s", exc)
        return EXIT_USAGE


def main_entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_entry()
