"""Experiment harness and CLI: artifacts, determinism, exit codes."""

import csv
import json

import pytest

from mcparareal import load_config, resolve_config
from mcparareal.cli import main
from mcparareal.errors import ConfigError
from mcparareal.harness import (bounds_table, compare_moment, run_experiment,
                                sweep_n)


def small_ou(**parareal):
    pr = {"n_slices": 4, "iterations": 2, "slice_length": 0.25, "dt": 0.05,
          "particles": 200, "seed": 5}
    pr.update(parareal)
    return resolve_config({
        "schema_version": 1,
        "problem": {"kind": "perturbed-ou", "B": 1.0},
        "initial": {"kind": "normal", "mean": 1.0, "variance": 0.5},
        "parareal": pr,
        "errors": {"floor_replicas": 2},
    })


def read_bytes(path):
    return path.read_bytes()


# ---------------------------------------------------------------------------
# run command
# ---------------------------------------------------------------------------

def test_run_writes_all_artifacts(tmp_path):
    paths = run_experiment(small_ou(), tmp_path)
    assert set(paths) == {"iterates", "errors", "histogram", "meta",
                          "timings"}
    for p in paths.values():
        assert p.exists() and p.stat().st_size > 0

    with open(paths["errors"]) as fh:
        rows = list(csv.DictReader(fh))
    # one row per (iteration, replicate)
    assert len(rows) == 3
    assert float(rows[-1]["E_wass"]) == 0.0  # reference iterate
    assert float(rows[0]["statistical_floor"]) > 0.0

    with open(paths["iterates"]) as fh:
        iterates = list(csv.DictReader(fh))
    # (K+1) x (N+1) x replicates x regions
    assert len(iterates) == 3 * 5
    assert iterates[0]["experiment_id"].startswith("perturbed-ou-")

    meta = json.loads(paths["meta"].read_text())
    assert meta["command"] == "run"
    assert meta["seeds"]["replicates"] == [5]
    assert len(meta["seeds"]["floor"]) == 2
    assert meta["floor"]["e_wass"] > 0.0

    timings = json.loads(paths["timings"].read_text())
    assert "projected_speedup" in timings
    assert timings["replicates"][0]["wall_seconds"] > 0.0


def test_reruns_and_worker_counts_are_byte_identical(tmp_path):
    a = run_experiment(small_ou(workers=1), tmp_path / "a")
    b = run_experiment(small_ou(workers=1), tmp_path / "b")
    c = run_experiment(small_ou(workers=8), tmp_path / "c")
    for name in ("iterates", "errors", "histogram"):
        assert read_bytes(a[name]) == read_bytes(b[name])
        assert read_bytes(a[name]) == read_bytes(c[name])


def test_meta_json_closes_the_reproduction_loop(tmp_path):
    paths = run_experiment(small_ou(), tmp_path / "first")
    reloaded = load_config(paths["meta"])
    again = run_experiment(reloaded, tmp_path / "second")
    assert read_bytes(paths["iterates"]) == read_bytes(again["iterates"])
    assert reloaded.experiment_id == small_ou().experiment_id


def test_replicates_vary_by_derived_seed(tmp_path):
    paths = run_experiment(small_ou(replicates=2), tmp_path)
    with open(paths["errors"]) as fh:
        rows = list(csv.DictReader(fh))
    by_rep = {}
    for row in rows:
        if row["k"] == "0":
            by_rep[row["replicate"]] = row["E_wass"]
    assert by_rep["0"] != by_rep["1"]


def test_histogram_counts_sum_to_particle_count(tmp_path):
    cfg = small_ou()
    paths = run_experiment(cfg, tmp_path)
    with open(paths["histogram"]) as fh:
        rows = list(csv.DictReader(fh))
    per_iteration = {}
    for row in rows:
        key = (row["k"], row["n"])
        per_iteration[key] = per_iteration.get(key, 0) + int(row["count"])
    assert set(per_iteration.values()) == {cfg.particles}


# ---------------------------------------------------------------------------
# other commands
# ---------------------------------------------------------------------------

def test_sweep_n_scales_slice_counts(tmp_path):
    cfg = resolve_config({
        "schema_version": 1,
        "problem": {"kind": "perturbed-ou", "B": 1.0},
        "initial": {"kind": "normal", "mean": 1.0, "variance": 0.5},
        "parareal": {"slice_length": 0.25, "dt": 0.05, "particles": 100,
                     "n_slices": 4},
        "sweep": {"n_values": [2, 3]},
    })
    paths = sweep_n(cfg, tmp_path)
    with open(paths["scaling"]) as fh:
        rows = list(csv.DictReader(fh))
    counts = {row["n_slices"] for row in rows}
    assert counts == {"2", "3"}
    # iterations follow n_slices when the config runs to exactness
    assert len([r for r in rows if r["n_slices"] == "2"]) == 3
    assert len([r for r in rows if r["n_slices"] == "3"]) == 4


def test_bounds_table_dominates_observed_errors(tmp_path):
    cfg = resolve_config({
        "schema_version": 1,
        "problem": {"kind": "perturbed-ou"},
        "bounds": {"slice_lengths": [0.1, 2.0]},
    })
    paths = bounds_table(cfg, tmp_path)
    with open(paths["bounds"]) as fh:
        rows = list(csv.DictReader(fh))
    assert {row["channel"] for row in rows} == {"mean", "variance"}
    checked = 0
    for row in rows:
        if row["superlinear_bound"]:
            assert float(row["observed_error"]) \
                <= float(row["superlinear_bound"]) * (1.0 + 1e-9)
            checked += 1
    assert checked > 20

    with pytest.raises(ConfigError):
        bounds_table(resolve_config({"schema_version": 1,
                                     "problem": {"kind": "burgers"}}),
                     tmp_path)


def test_compare_moment_writes_mc_and_closure_tracks(tmp_path):
    cfg = resolve_config({
        "schema_version": 1,
        "problem": {"kind": "burgers"},
        "compare": {"t_end": 1.0, "grid_points": 5, "particles": 500,
                    "dt": 0.1},
    })
    paths = compare_moment(cfg, tmp_path)
    with open(paths["moments"]) as fh:
        rows = list(csv.DictReader(fh))
    variants = {row["variant"] for row in rows}
    # the rank model has no enrichable statistic, so no taylor track
    assert variants == {"mc", "first-order"}
    final = [r for r in rows if r["variant"] == "first-order"][-1]
    assert float(final["mean"]) == pytest.approx(0.5, abs=1e-6)


def test_compare_moment_records_closure_singularities(tmp_path):
    cfg = resolve_config({
        "schema_version": 1,
        "problem": {"kind": "plane-rotator"},
        "compare": {"t_end": 2.0, "grid_points": 9, "particles": 400,
                    "dt": 0.01},
    })
    paths = compare_moment(cfg, tmp_path)
    with open(paths["moments"]) as fh:
        variants = {row["variant"] for row in csv.DictReader(fh)}
    assert {"mc", "first-order", "taylor"} <= variants


# ---------------------------------------------------------------------------
# CLI
# ---------------------------------------------------------------------------

def write_config(tmp_path, text):
    path = tmp_path / "exp.toml"
    path.write_text(text)
    return str(path)


OU_TOML = (
    'schema_version = 1\n'
    '[problem]\nkind = "perturbed-ou"\nB = 1.0\n'
    '[initial]\nkind = "normal"\nmean = 1.0\nvariance = 0.5\n'
    '[parareal]\nn_slices = 3\niterations = 1\nslice_length = 0.25\n'
    'dt = 0.05\nparticles = 64\n'
    '[errors]\nfloor_replicas = 2\n'
)


def test_cli_run_success(tmp_path, capsys):
    cfg = write_config(tmp_path, OU_TOML)
    code = main(["run", "--config", cfg, "--out", str(tmp_path / "out")])
    assert code == 0
    out = capsys.readouterr().out
    assert "iterates" in out and "meta" in out
    assert (tmp_path / "out" / "errors.csv").exists()


def test_cli_rejects_bad_configs_with_exit_2(tmp_path, capsys):
    bad = write_config(tmp_path, 'schema_version = 1\n[problem]\nkind = "x"\n')
    assert main(["run", "--config", bad, "--out", str(tmp_path)]) == 2
    assert "config error" in capsys.readouterr().err
    assert main(["run", "--config", str(tmp_path / "none.toml"),
                 "--out", str(tmp_path)]) == 2


@pytest.mark.filterwarnings("ignore:overflow:RuntimeWarning")
@pytest.mark.filterwarnings("ignore:invalid value:RuntimeWarning")
def test_cli_reports_numerical_failures_with_exit_3(tmp_path, capsys):
    unstable = write_config(tmp_path, (
        'schema_version = 1\n'
        '[problem]\nkind = "double-well"\n'
        '[parareal]\nn_slices = 4\niterations = 2\nslice_length = 2.0\n'
        'dt = 0.5\nparticles = 32\ncoarse = "first-order"\n'
        '[errors]\nfloor_replicas = 2\n'
    ))
    code = main(["run", "--config", unstable, "--out", str(tmp_path / "o")])
    assert code == 3
    assert "numerical failure" in capsys.readouterr().err


def test_cli_lint_warnings_go_to_stderr(tmp_path, capsys):
    sparse = write_config(tmp_path, OU_TOML.replace(
        "particles = 64", "particles = 10000000"))
    code = main(["run", "--config", sparse, "--out", str(tmp_path / "out")])
    assert code == 0
    assert "bias will dominate" in capsys.readouterr().err


def test_cli_seed_override_changes_outputs(tmp_path):
    cfg = write_config(tmp_path, OU_TOML)
    main(["run", "--config", cfg, "--out", str(tmp_path / "a"),
          "--seed", "101"])
    main(["run", "--config", cfg, "--out", str(tmp_path / "b"),
          "--seed", "102"])
    a = (tmp_path / "a" / "errors.csv").read_text()
    b = (tmp_path / "b" / "errors.csv").read_text()
    assert a != b
    meta = json.loads((tmp_path / "a" / "meta.json").read_text())
    assert meta["config"]["parareal"]["seed"] == 101


def test_cli_workers_env_var(tmp_path, monkeypatch, capsys):
    cfg = write_config(tmp_path, OU_TOML)
    monkeypatch.setenv("MCPARAREAL_WORKERS", "not-a-number")
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "x")]) == 2
    capsys.readouterr()
    monkeypatch.setenv("MCPARAREAL_WORKERS", "2")
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "y")]) == 0


def test_cli_output_directory_from_config(tmp_path, capsys, monkeypatch):
    monkeypatch.chdir(tmp_path)
    cfg = write_config(tmp_path, OU_TOML + (
        f'[output]\ndirectory = "{(tmp_path / "configured").as_posix()}"\n'))
    assert main(["run", "--config", cfg]) == 0
    assert (tmp_path / "configured" / "meta.json").exists()
