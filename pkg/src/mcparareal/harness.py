"""Experiment harness: resolved configs in, CSV artifacts out.

Every command writes deterministic artifacts: floats are serialized with
``repr`` (shortest round-trip), row orders are fixed (iteration, then slice,
then replicate), and all randomness flows through per-replicate seeds derived
from the configured master seed, so reruns are byte-identical regardless of
the worker count.  meta.json embeds the fully resolved config and reloads as
a config file, closing the reproduction loop.
"""

from __future__ import annotations

import csv
import json
import math
import platform
import time
from importlib import metadata
from pathlib import Path

import numpy as np

from .analysis import (CostModel, linear_bound, ou_slice_propagators, speedup,
                       superlinear_bound)
from .config import ExperimentConfig
from .engine import (PararealConfig, run_classical, run_micro_macro,
                     sequential_fine)
from .errors import (BoundInapplicable, ConfigError, IntegrationFailure,
                     InvalidCostModel, SingularityError)
from .metrics import (floor_from_references, moment_spread, relative_errors,
                      statistical_floor)
from .models import (BurgersSpec, DoubleWellSpec, InitialDistribution,
                     LinearMcKVSpec, PerturbedOUSpec, PlaneRotatorSpec,
                     make_burgers, make_double_well, make_linear,
                     make_perturbed_ou, make_plane_rotator)
from .moments import (burgers_rhs, integrate_macro, multimodal_rhs,
                      perturbed_ou_rhs, taylor_enriched_rhs, unimodal_rhs)
from .particles import NoisePlan, StepConfig
from .rk54 import IntegratorConfig
from .state import MacroState, RegionPartition, SINGLE_REGION

# replicate r uses derived seed index r (replicate 0 keeps the master seed);
# floor replicas start at this offset so the two families never collide
_FLOOR_SEED_BASE = 10_000

# hard cap on histogram bins when an iterate strays far outside the
# reference range and the Freedman-Diaconis width would explode the file
_MAX_HIST_BINS = 2000

_SPEC_BUILDERS = {
    "perturbed-ou": (PerturbedOUSpec, make_perturbed_ou),
    "plane-rotator": (PlaneRotatorSpec, make_plane_rotator),
    "burgers": (BurgersSpec, make_burgers),
    "double-well": (DoubleWellSpec, make_double_well),
    "linear": (LinearMcKVSpec, make_linear),
}


def _package_version() -> str:
    try:
        return metadata.version("mcparareal")
    except metadata.PackageNotFoundError:
        return "0.0.0"


# ---------------------------------------------------------------------------
# builders: config -> library objects
# ---------------------------------------------------------------------------

def build_model(cfg: ExperimentConfig):
    """(model, spec) for the configured problem."""
    spec_cls, factory = _SPEC_BUILDERS[cfg.problem_kind]
    try:
        spec = spec_cls(**cfg.problem)
        return factory(spec), spec
    except ValueError as exc:
        raise ConfigError(f"invalid problem parameters: {exc}") from exc


def build_initial(cfg: ExperimentConfig) -> InitialDistribution:
    init = cfg.initial
    try:
        if init["kind"] == "dirac":
            return InitialDistribution.dirac(init["x0"])
        return InitialDistribution.normal(init["mean"], init["variance"])
    except ValueError as exc:
        raise ConfigError(f"invalid initial distribution: {exc}") from exc


def build_partition(cfg: ExperimentConfig, spec) -> RegionPartition:
    if cfg.partition is not None:
        try:
            return RegionPartition(
                separatrices=tuple(cfg.partition["separatrices"]),
                peaks=tuple(cfg.partition["peaks"])
                if "peaks" in cfg.partition else None)
        except Exception as exc:
            raise ConfigError(f"invalid partition: {exc}") from exc
    if cfg.coarse == "multimodal":
        if not isinstance(spec, DoubleWellSpec):
            raise ConfigError(
                "the multimodal moment model needs an explicit [partition] "
                "for problems without a double-well potential")
        return spec.default_partition()
    return SINGLE_REGION


def build_coarse(cfg: ExperimentConfig, model, spec,
                 partition: RegionPartition):
    kind = cfg.coarse
    try:
        if kind == "first-order":
            if cfg.problem_kind == "burgers":
                return burgers_rhs(spec.sigma)
            return unimodal_rhs(model)
        if kind == "taylor":
            return taylor_enriched_rhs(model)
        if kind == "perturbed-ou":
            if not isinstance(spec, PerturbedOUSpec):
                raise ConfigError(
                    "the perturbed-ou moment model applies only to the "
                    "perturbed-ou problem")
            return perturbed_ou_rhs(spec)
        if kind == "burgers":
            if not isinstance(spec, BurgersSpec):
                raise ConfigError(
                    "the burgers moment model applies only to the burgers "
                    "problem")
            return burgers_rhs(spec.sigma)
        if kind == "multimodal":
            if not isinstance(spec, DoubleWellSpec):
                raise ConfigError(
                    "the multimodal moment model needs a potential; only the "
                    "double-well problem provides one")
            return multimodal_rhs(model, partition, spec.potential,
                                  spec.sigma, weight_mode=cfg.fraction_weights)
    except ValueError as exc:
        raise ConfigError(f"coarse model {kind!r} not applicable: {exc}") from exc
    raise ConfigError(f"unknown coarse model {kind!r}")


def build_parareal_config(cfg: ExperimentConfig, partition: RegionPartition,
                          n_slices: int | None = None,
                          iterations: int | None = None) -> PararealConfig:
    return PararealConfig(
        n_slices=cfg.n_slices if n_slices is None else n_slices,
        iterations=cfg.iterations if iterations is None else iterations,
        slice_length=cfg.slice_length,
        particles=cfg.particles,
        step=StepConfig(cfg.dt, cfg.steps_per_slice),
        partition=partition,
        integrator=IntegratorConfig(rel_tol=cfg.rel_tol, abs_tol=cfg.abs_tol),
        workers=cfg.workers,
        stop_wasserstein_tol=cfg.stop_wasserstein_tol,
    )


def replicate_seeds(cfg: ExperimentConfig) -> tuple[list, list]:
    """(replicate seeds, floor-replica seeds), all derived from the master."""
    base = NoisePlan(cfg.seed)
    reps = [cfg.seed if r == 0 else base.derived_seed(r)
            for r in range(cfg.replicates)]
    floors = [base.derived_seed(_FLOOR_SEED_BASE + j)
              for j in range(cfg.floor_replicas)]
    return reps, floors


# ---------------------------------------------------------------------------
# CSV plumbing
# ---------------------------------------------------------------------------

def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(cell) for cell in row])


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n",
                    encoding="utf-8")


def _meta(cfg: ExperimentConfig, command: str, seeds, floor_seeds,
          extra: dict | None = None) -> dict:
    meta = {
        "meta_version": 1,
        "command": command,
        "experiment_id": cfg.experiment_id,
        "config": cfg.to_dict(),
        "seeds": {"replicates": list(seeds), "floor": list(floor_seeds)},
        "versions": {"package": _package_version(),
                     "numpy": np.__version__,
                     "python": platform.python_version()},
    }
    if extra:
        meta.update(extra)
    return meta


def _fd_edges(reference: np.ndarray, samples) -> np.ndarray:
    """Freedman-Diaconis bin edges sized on the reference, spanning all data."""
    lo = min(float(np.min(s)) for s in samples)
    hi = max(float(np.max(s)) for s in samples)
    q25, q75 = np.percentile(reference, [25.0, 75.0])
    width = 2.0 * (q75 - q25) * reference.size ** (-1.0 / 3.0)
    if width <= 0.0 or not math.isfinite(width):
        return np.array([lo, np.nextafter(hi, math.inf) if hi == lo else hi])
    if (hi - lo) / width > _MAX_HIST_BINS:
        width = (hi - lo) / _MAX_HIST_BINS
    start = float(np.min(reference))
    left = start - math.ceil(max(0.0, start - lo) / width) * width
    nbins = max(1, math.ceil((hi - left) / width))
    edges = left + width * np.arange(nbins + 1)
    while edges[-1] < hi:
        edges = np.append(edges, edges[-1] + width)
    return edges


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def run_experiment(cfg: ExperimentConfig, out_dir) -> dict:
    """Full run: iterates.csv, errors.csv, histogram.csv, meta and timings."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    model, spec = build_model(cfg)
    initial = build_initial(cfg)
    partition = build_partition(cfg, spec)
    coarse = build_coarse(cfg, model, spec, partition)
    pcfg = build_parareal_config(cfg, partition)
    seeds, floor_seeds = replicate_seeds(cfg)
    exp_id = cfg.experiment_id

    traces, reports, walls = [], [], []
    for seed in seeds:
        start = time.perf_counter()
        trace = run_micro_macro(model, coarse, initial, pcfg,
                                NoisePlan(seed, cfg.noise_mode))
        walls.append(time.perf_counter() - start)
        traces.append(trace)
        reports.append([relative_errors(trace, k,
                                        var_denominator=cfg.var_denominator)
                        for k in range(trace.iterations + 1)])

    start = time.perf_counter()
    floor_paths = [sequential_fine(model, initial, pcfg,
                                   NoisePlan(seed, cfg.noise_mode))
                   for seed in floor_seeds]
    floor = floor_from_references(floor_paths, cfg.var_denominator)
    finals = [path[-1] for path in floor_paths]
    raw_floor = statistical_floor(finals)
    mean_spread, var_spread = moment_spread(finals)
    floor_wall = time.perf_counter() - start

    max_iter = max(trace.iterations for trace in traces)

    rows = []
    for k in range(max_iter + 1):
        for n in range(cfg.n_slices + 1):
            for r, trace in enumerate(traces):
                if k > trace.iterations:
                    continue
                macro = trace.macro[k][n]
                micro = trace.micro_stats[k][n]
                for i in range(partition.n_regions):
                    rows.append((exp_id, r, k, n, trace.times[n], i,
                                 macro.means[i], macro.variances[i],
                                 macro.fractions[i], micro.means[i],
                                 micro.variances[i], micro.fractions[i]))
    _write_csv(out / "iterates.csv",
               ["experiment_id", "replicate", "k", "n", "t", "region",
                "macro_mean", "macro_variance", "macro_fraction",
                "micro_mean", "micro_variance", "micro_fraction"], rows)

    rows = []
    for k in range(max_iter + 1):
        for r, trace in enumerate(traces):
            if k > trace.iterations:
                continue
            rep = reports[r][k]
            rows.append((exp_id, r, k, rep.e_mean, rep.e_var, rep.e_wass,
                         floor.e_wass, floor.e_mean, floor.e_var))
    _write_csv(out / "errors.csv",
               ["experiment_id", "replicate", "k", "E_mean", "E_var",
                "E_wass", "statistical_floor", "floor_mean", "floor_var"],
               rows)

    hist_iters = list(range(max_iter + 1)) \
        if cfg.histogram_iterations == "all" else list(cfg.histogram_iterations)
    rows = []
    edges_cache = {}
    for r, trace in enumerate(traces):
        for n in cfg.histogram_slices:
            data = [trace.snapshots[k][n].positions
                    for k in hist_iters if k <= trace.iterations]
            reference = trace.snapshots[trace.iterations][n].positions
            edges_cache[(r, n)] = _fd_edges(reference, data + [reference])
    for k in hist_iters:
        for n in cfg.histogram_slices:
            for r, trace in enumerate(traces):
                if k > trace.iterations:
                    continue
                edges = edges_cache[(r, n)]
                counts = np.histogram(trace.snapshots[k][n].positions,
                                      edges)[0]
                for b in range(len(counts)):
                    rows.append((exp_id, r, k, n, float(edges[b]),
                                 float(edges[b + 1]), int(counts[b])))
    _write_csv(out / "histogram.csv",
               ["experiment_id", "replicate", "k", "n", "bin_left",
                "bin_right", "count"], rows)

    diag = [{"replicate": r,
             "clamp_events": len(trace.clamp_events),
             "lift_collapses": len(trace.lift_collapses),
             "max_fraction_gap": max((g for _, _, g in trace.fraction_gaps),
                                     default=0.0),
             "stopped_at": trace.stopped_at}
            for r, trace in enumerate(traces)]
    meta = _meta(cfg, "run", seeds, floor_seeds, {
        "floor": {"e_mean": floor.e_mean, "e_var": floor.e_var,
                  "e_wass": floor.e_wass, "n_replicas": floor.n_replicas,
                  "raw_wasserstein": raw_floor,
                  "mean_spread": mean_spread, "var_spread": var_spread},
        "diagnostics": diag,
    })
    _write_json(out / "meta.json", meta)

    timing_rows = []
    for r, trace in enumerate(traces):
        stages = {}
        for stage, values in trace.timings.items():
            stages[stage] = {"total": sum(values), "count": len(values),
                             "mean": sum(values) / len(values) if values else 0.0}
        timing_rows.append({"replicate": r, "wall_seconds": walls[r],
                            "stages": stages})
    timings = {"replicates": timing_rows, "floor_wall_seconds": floor_wall}
    stages = timing_rows[0]["stages"]
    try:
        cost = CostModel(cfg.n_slices,
                         coarse_seconds=stages["coarse"]["mean"],
                         fine_seconds=stages["fine"]["mean"],
                         restrict_seconds=stages["restrict"]["mean"],
                         match_seconds=stages["match"]["mean"])
        timings["projected_speedup"] = {
            str(k): speedup(cost, k) for k in range(1, max_iter + 1)}
    except (InvalidCostModel, KeyError):
        pass
    _write_json(out / "timings.json", timings)

    return {"iterates": out / "iterates.csv", "errors": out / "errors.csv",
            "histogram": out / "histogram.csv", "meta": out / "meta.json",
            "timings": out / "timings.json"}


def sweep_n(cfg: ExperimentConfig, out_dir) -> dict:
    """Weak scaling: rerun per N at fixed slice length, horizon T = N * T0."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    model, spec = build_model(cfg)
    initial = build_initial(cfg)
    partition = build_partition(cfg, spec)
    coarse = build_coarse(cfg, model, spec, partition)
    seeds, floor_seeds = replicate_seeds(cfg)
    exp_id = cfg.experiment_id

    rows = []
    for n_slices in cfg.sweep_n_values:
        if cfg.iterations == cfg.n_slices:
            iters = n_slices
        else:
            iters = min(cfg.iterations, n_slices)
        pcfg = build_parareal_config(cfg, partition, n_slices=n_slices,
                                     iterations=iters)
        for r, seed in enumerate(seeds):
            trace = run_micro_macro(model, coarse, initial, pcfg,
                                    NoisePlan(seed, cfg.noise_mode))
            for k in range(trace.iterations + 1):
                rep = relative_errors(trace, k,
                                      var_denominator=cfg.var_denominator)
                rows.append((k, n_slices, r, rep))

    rows.sort(key=lambda row: row[:3])
    _write_csv(out / "scaling.csv",
               ["experiment_id", "n_slices", "replicate", "k", "E_mean",
                "E_var", "E_wass", "normalized_mean", "normalized_var",
                "normalized_wass"],
               [(exp_id, n_slices, r, k, rep.e_mean, rep.e_var, rep.e_wass,
                 rep.normalized_mean, rep.normalized_var, rep.normalized_wass)
                for k, n_slices, r, rep in rows])
    _write_json(out / "meta.json", _meta(cfg, "sweep-n", seeds, floor_seeds))
    return {"scaling": out / "scaling.csv", "meta": out / "meta.json"}


def bounds_table(cfg: ExperimentConfig, out_dir) -> dict:
    """Noise-free Parareal error curves next to their convergence bounds."""
    if cfg.problem_kind != "perturbed-ou":
        raise ConfigError(
            "bound curves use the exact moment propagators of the "
            "perturbed-ou problem")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    _, spec = build_model(cfg)
    initial = build_initial(cfg)
    exp_id = cfg.experiment_id
    n_slices = cfg.n_slices

    rows = []
    for slice_length in cfg.bounds_slice_lengths:
        props = ou_slice_propagators(spec, slice_length)
        channels = (("mean", props.mean_coarse, props.mean_fine,
                     initial.mean),
                    ("variance", props.var_coarse, props.var_fine,
                     initial.variance))
        for name, coarse, fine, u0 in channels:
            trace = run_classical(u0, coarse, fine, n_slices, n_slices)
            e0 = float(trace.errors[0])
            for k in range(n_slices + 1):
                try:
                    sup = superlinear_bound(coarse.multiplier, fine.multiplier,
                                            n_slices, k, e0)
                except BoundInapplicable:
                    sup = None
                try:
                    lin = linear_bound(coarse.multiplier, fine.multiplier,
                                       k, e0)
                except BoundInapplicable:
                    lin = None
                rows.append((exp_id, name, slice_length, k,
                             float(trace.errors[k]), sup, lin))

    _write_csv(out / "bounds.csv",
               ["experiment_id", "channel", "slice_length", "k",
                "observed_error", "superlinear_bound", "linear_bound"], rows)
    _write_json(out / "meta.json", _meta(cfg, "bounds", [cfg.seed], []))
    return {"bounds": out / "bounds.csv", "meta": out / "meta.json"}


def compare_moment(cfg: ExperimentConfig, out_dir) -> dict:
    """Moment-model trajectories against a large Monte Carlo reference."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    model, spec = build_model(cfg)
    initial = build_initial(cfg)
    exp_id = cfg.experiment_id
    grid = np.linspace(0.0, cfg.compare_t_end, cfg.compare_grid)
    segment = float(grid[1] - grid[0])
    steps = max(1, round(segment / cfg.compare_dt))
    pcfg = PararealConfig(
        n_slices=cfg.compare_grid - 1, iterations=0, slice_length=segment,
        particles=cfg.compare_particles,
        step=StepConfig(segment / steps, steps),
        integrator=IntegratorConfig(rel_tol=cfg.rel_tol, abs_tol=cfg.abs_tol))
    plan = NoisePlan(cfg.seed, cfg.noise_mode)

    rows = []
    path = sequential_fine(model, initial, pcfg, plan)
    for i, t in enumerate(grid):
        x = path[i].positions
        rows.append((exp_id, "mc", float(t), float(np.mean(x)),
                     float(np.var(x))))

    variants = []
    if cfg.problem_kind == "burgers":
        variants.append(("first-order", burgers_rhs(spec.sigma)))
    else:
        variants.append(("first-order", unimodal_rhs(model)))
    try:
        variants.append(("taylor", taylor_enriched_rhs(model)))
    except ValueError:
        pass

    truncated = {}
    integ = IntegratorConfig(rel_tol=cfg.rel_tol, abs_tol=cfg.abs_tol)
    for name, ode in variants:
        state = MacroState((initial.mean,), (initial.variance,), (1.0,))
        rows.append((exp_id, name, float(grid[0]), state.means[0],
                     state.variances[0]))
        for i in range(len(grid) - 1):
            try:
                state = integrate_macro(ode, state, float(grid[i]),
                                        float(grid[i + 1]), integ)
            except (SingularityError, IntegrationFailure):
                truncated[name] = float(grid[i])
                break
            rows.append((exp_id, name, float(grid[i + 1]), state.means[0],
                         state.variances[0]))

    _write_csv(out / "moment_vs_mc.csv",
               ["experiment_id", "variant", "t", "mean", "variance"], rows)
    _write_json(out / "meta.json",
                _meta(cfg, "compare-moment", [cfg.seed], [],
                      {"truncated": truncated} if truncated else None))
    return {"moments": out / "moment_vs_mc.csv", "meta": out / "meta.json"}
