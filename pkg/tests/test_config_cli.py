import json

import numpy as np
import pytest

from dissipchaos.cache import cache_path
from dissipchaos.cli import EXIT_GUARD, EXIT_OK, EXIT_USAGE, main, parse_grid
from dissipchaos.config import ConfigError, load_config, model_from_config, task_options
from dissipchaos.liouvillian import eigenvalues_from_csv, eigenvalues_to_csv
from dissipchaos.models import BoseHubbardParams

KERR = ["--model", "kerr", "--delta", "1.0", "--F", "1.0", "--U", "1.0", "--cutoff", "8"]


def read_csv_rows(path):
    lines = [l for l in open(path).read().splitlines() if not l.startswith("#")]
    header = lines[0].split(",")
    return [dict(zip(header, l.split(","))) for l in lines[1:]]


def csv_metadata(path):
    first = open(path).readline()
    assert first.startswith("# ")
    return json.loads(first[2:])


# -- configuration --------------------------------------------------------------

def test_toml_config_parsed_into_records(tmp_path):
    p = tmp_path / "c.toml"
    p.write_text('[model]\ntype = "bose-hubbard"\ndelta = -4\nF = 3\ncutoff = 5\n\n[ssqt]\nk = 2\n')
    cfg = load_config(p)
    model, rec, resolved = model_from_config(cfg, overrides={"F": 2.5})
    assert isinstance(rec, BoseHubbardParams)
    assert rec.delta == -4.0 and rec.F == 2.5 and rec.cutoff == 5 and rec.n_sites == 2
    assert resolved["type"] == "bose-hubbard" and model.dim == 36
    assert task_options(cfg, "ssqt", {"k": None}, {"k": 3})["k"] == 2
    assert task_options(cfg, "ssqt", {"k": 4}, {"k": 3})["k"] == 4


def test_config_errors(tmp_path):
    with pytest.raises(ConfigError):
        model_from_config({"model": {"type": "kerr", "bogus": 1}})
    with pytest.raises(ConfigError):
        model_from_config({"model": {"type": "laser"}})
    with pytest.raises(ConfigError):
        model_from_config({"model": {"type": "kerr", "cutoff": 2.5}})
    with pytest.raises(ConfigError):
        task_options({"ssqt": {"nope": 1}}, "ssqt", {}, {"k": 3})
    bad = tmp_path / "bad.toml"
    bad.write_text("[model\n")
    with pytest.raises(ConfigError):
        load_config(bad)
    assert main(["spectrum", "--config", str(bad)]) == EXIT_USAGE


# -- spectrum -------------------------------------------------------------------

def test_spectrum_writes_csv_and_cache(tmp_path, capfd):
    out = tmp_path / "eig.csv"
    cache = tmp_path / "cache"
    assert main(["spectrum", *KERR, "--out", str(out), "--cache-dir", str(cache)]) == EXIT_OK
    files = list(cache.iterdir())
    assert out.exists() and len(files) == 1 and files[0].suffix == ".spec"
    eigs = eigenvalues_from_csv(out)
    assert eigs.size == 81
    meta = csv_metadata(out)
    assert meta["config"]["model"]["cutoff"] == 8 and "tolerances" in meta
    assert "cache miss" in capfd.readouterr().err

    assert main(["spectrum", *KERR, "--out", str(out), "--cache-dir", str(cache)]) == EXIT_OK
    assert "cache hit" in capfd.readouterr().err

    files[0].write_bytes(files[0].read_bytes()[:64])
    with pytest.warns(RuntimeWarning, match="corrupt"):
        assert main(["spectrum", *KERR, "--out", str(out), "--cache-dir", str(cache)]) == EXIT_OK
    np.testing.assert_array_equal(eigenvalues_from_csv(out), eigs)


def test_spectrum_memory_guard(tmp_path):
    args = ["spectrum", "--model", "bose-hubbard", "--cutoff", "8", "--out", str(tmp_path / "x.csv")]
    assert main(args) == EXIT_GUARD


# -- stats ----------------------------------------------------------------------

def test_stats_on_ginibre_sample(tmp_path):
    rng = np.random.default_rng(11)
    G = (rng.normal(size=(1500, 1500)) + 1j * rng.normal(size=(1500, 1500))) / np.sqrt(3000)
    src, out = tmp_path / "g.csv", tmp_path / "s.json"
    eigenvalues_to_csv(src, np.linalg.eigvals(G))
    assert main(["stats", "--input", str(src), "--out", str(out)]) == EXIT_OK
    res = json.loads(out.read_text())["result"]
    assert res["mean_r"] == pytest.approx(0.74, abs=0.03)
    assert res["neg_mean_cos_theta"] == pytest.approx(0.24, abs=0.04)
    assert res["distance_ginue"] < res["distance_poisson"]
    h = res["histogram"]
    assert len(h["density"]) == len(h["reference_ginue"]) == len(h["reference_poisson"]) == 50


def test_stats_bulk_eps_zero_keeps_everything(tmp_path):
    rng = np.random.default_rng(2)
    z = rng.normal(size=300) + 1j * rng.normal(size=300)
    src, out = tmp_path / "z.csv", tmp_path / "s.json"
    eigenvalues_to_csv(src, z)
    assert main(["stats", "--input", str(src), "--bulk-eps", "0", "--out", str(out)]) == EXIT_OK
    assert json.loads(out.read_text())["result"]["n"] == 300


def test_stats_reports_bad_line(tmp_path, capfd):
    src = tmp_path / "bad.csv"
    src.write_text("re,im\n0.1,0.2\n0.3,0.4\nfoo,1\n")
    assert main(["stats", "--input", str(src)]) == EXIT_USAGE
    assert ":4:" in capfd.readouterr().err


@pytest.mark.filterwarnings("ignore:unfolding only")
def test_stats_from_cache(tmp_path):
    cache = tmp_path / "cache"
    out = tmp_path / "s.json"
    assert main(["spectrum", *KERR, "--out", str(tmp_path / "e.csv"), "--cache-dir", str(cache)]) == 0
    f = next(cache.iterdir())
    assert main(["stats", "--from-cache", str(f), "--bulk-eps", "0", "--out", str(out)]) == EXIT_OK
    assert json.loads(out.read_text())["result"]["n"] <= 81


# -- trajectory and classical commands -------------------------------------------

def test_ssqt_rejects_empty_ensemble(tmp_path):
    assert main(["ssqt", *KERR, "--trajectories", "0", "--out", str(tmp_path / "x.json")]) == EXIT_USAGE


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_metadata_round_trip_reproduces_results(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    args = ["ssqt", *KERR, "--t", "0,0.5", "-M", "4", "--seed", "3", "--initial", "random"]
    assert main([*args, "--out", str(a)]) == EXIT_OK
    assert main(["ssqt", "--config", str(a), "--out", str(b)]) == EXIT_OK
    ra, rb = json.loads(a.read_text()), json.loads(b.read_text())
    assert ra["snapshots"] == rb["snapshots"]
    assert ra["metadata"]["config"] == rb["metadata"]["config"]
    assert ra["metadata"]["seeds"]["base_seed"] == 3


def test_classical_twa_otoc_outputs(tmp_path):
    c, t, o = tmp_path / "c.json", tmp_path / "t.json", tmp_path / "o.csv"
    base = ["--delta", "1.0", "--F", "0.5", "--U", "0.0", "--J", "0.0", "--n-sites", "1"]
    assert main(["classical", *base, "--n-transient", "100", "--n-sample", "5000",
                 "--n-blocks", "10", "--out", str(c)]) == EXIT_OK
    res = json.loads(c.read_text())
    assert res["result"]["classification"] == "negative"
    assert res["metadata"]["config"]["classical"]["n_sample"] == 5000
    assert main(["twa", "--delta", "2.5", "--F", "3", "-M", "4", "--t-relax", "0.5",
                 "--dt", "0.001", "--out", str(t)]) == EXIT_OK
    tw = json.loads(t.read_text())
    assert 0 <= tw["result"]["D_ss"] <= 1 and tw["metadata"]["dt"] == 0.001
    assert main(["otoc", *KERR, "--n-tau", "5", "--tau-max", "0.4", "--out", str(o)]) == EXIT_OK
    rows = read_csv_rows(o)
    # the truncated [Q, P] differs from i only on the top Fock level
    assert len(rows) == 5 and float(rows[0]["otoc"]) == pytest.approx(1.0, abs=1e-3)
    assert csv_metadata(o)["normalization"] == "none"


def test_hstats_table(tmp_path):
    out = tmp_path / "h.csv"
    assert main(["hstats", "--delta", "2.5", "--F", "2.9", "--L-values", "1",
                 "--M-max", "50,100", "--N-c", "14", "--out", str(out)]) == EXIT_OK
    rows = read_csv_rows(out)
    assert [int(r["M_max"]) for r in rows] == [50, 100]


# -- sweep ----------------------------------------------------------------------

def test_parse_grid():
    axes = parse_grid("Δ=-4:8:4,F=1:3:3")
    assert list(axes) == ["delta", "F"]
    np.testing.assert_allclose(axes["delta"], [-4, 0, 4, 8])
    with pytest.raises(ValueError):
        parse_grid("delta=1:2")


def test_sweep_unknown_task(tmp_path):
    assert main(["sweep", "--grid", "delta=0:1:2", "--task", "magic", "--out", str(tmp_path / "o.csv")]) == EXIT_USAGE


def test_sweep_grid_and_resume(tmp_path, capfd):
    out = tmp_path / "grid.csv"
    args = ["sweep", "--model", "kerr", "--cutoff", "6", "--grid", "delta=-1:1:3,F=0.5:1.5:3",
            "--task", "deltan", "--out", str(out)]
    assert main(args) == EXIT_OK
    rows = read_csv_rows(out)
    assert len(rows) == 9 and all(np.isfinite(float(r["delta_n"])) for r in rows)
    assert "9 points, 0 cached, 9 to compute" in capfd.readouterr().err

    points = sorted((tmp_path / "grid.csv.points").glob("*.json"))
    assert len(points) == 9
    for p in points[:2]:
        p.unlink()
    assert main(args) == EXIT_OK
    assert "9 points, 7 cached, 2 to compute" in capfd.readouterr().err
    assert read_csv_rows(out) == rows


def test_sweep_guard_exit_code(tmp_path):
    args = ["sweep", "--model", "bose-hubbard", "--cutoff", "8", "--grid", "delta=0:1:1",
            "--task", "ssqt", "--t", "0", "-M", "2", "--out", str(tmp_path / "o.csv")]
    assert main(args) == EXIT_GUARD


def test_cache_dir_environment_override(tmp_path, monkeypatch):
    monkeypatch.setenv("DISSIPCHAOS_CACHE_DIR", str(tmp_path / "envcache"))
    assert cache_path("abc").parent == tmp_path / "envcache"
