"""Experiment configuration: TOML schema, defaults, validation, round-trip.

A config file fully determines an experiment.  ``resolve_config`` fills in
per-problem defaults and validates strictly (unknown keys are rejected), and
the resolved dictionary written to meta.json re-loads to the identical
experiment, so every output directory is self-describing.
"""

from __future__ import annotations

import json
import hashlib
import math
from dataclasses import dataclass
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .errors import ConfigError

SCHEMA_VERSION = 1

PROBLEM_KINDS = ("perturbed-ou", "plane-rotator", "burgers", "double-well",
                 "linear")

_PROBLEM_DEFAULTS = {
    "perturbed-ou": {"a": -1.0, "a_E": -0.5, "B": 0.01,
                     "eps_mean": 1.0, "eps_var": 1.0},
    "plane-rotator": {"K": 0.5, "kBT": 0.1, "wrap": True},
    "burgers": {"sigma": math.sqrt(0.2)},
    "double-well": {"alpha": 0.25, "gamma": 0.5, "beta": 0.3, "J": 0.0,
                    "sigma": 1.0},
    "linear": {"A": -1.0, "A_E": -0.5, "A_0": 0.0,
               "B": 0.0, "B_E": 0.0, "B_0": 1.0},
}

_INITIAL_DEFAULTS = {
    "perturbed-ou": {"kind": "dirac", "x0": 100.0},
    "plane-rotator": {"kind": "normal", "mean": math.pi / 4,
                      "variance": 3 * math.pi / 4},
    "burgers": {"kind": "dirac", "x0": 0.0},
    "double-well": {"kind": "normal", "mean": 1.2, "variance": 0.8},
    "linear": {"kind": "normal", "mean": 1.0, "variance": 1.0},
}

_RUN_DEFAULTS = {
    "perturbed-ou": {"n_slices": 10, "slice_length": 0.1, "dt": 1e-3,
                     "particles": 10_000},
    "plane-rotator": {"n_slices": 10, "slice_length": 1.0, "dt": 1e-3,
                      "particles": 10_000},
    "burgers": {"n_slices": 10, "slice_length": 2.0, "dt": 0.1,
                "particles": 10_000},
    "double-well": {"n_slices": 10, "slice_length": 0.1, "dt": 0.005,
                    "particles": 10_000},
    "linear": {"n_slices": 10, "slice_length": 0.1, "dt": 1e-3,
               "particles": 10_000},
}

_AUTO_COARSE = {
    "perturbed-ou": "perturbed-ou",
    "plane-rotator": "taylor",
    "burgers": "burgers",
    "double-well": "multimodal",
    "linear": "first-order",
}

COARSE_KINDS = ("auto", "first-order", "taylor", "perturbed-ou", "burgers",
                "multimodal")


@dataclass(frozen=True)
class ExperimentConfig:
    """Fully resolved experiment description."""

    problem_kind: str
    problem: dict
    initial: dict
    n_slices: int
    iterations: int
    slice_length: float
    dt: float
    particles: int
    noise_mode: str
    coarse: str
    replicates: int
    seed: int
    workers: int
    stop_wasserstein_tol: float | None
    partition: dict | None
    rel_tol: float
    abs_tol: float
    var_denominator: str
    fraction_weights: str
    floor_replicas: int
    histogram_slices: tuple
    histogram_iterations: tuple | str
    sweep_n_values: tuple
    bounds_slice_lengths: tuple
    compare_t_end: float
    compare_grid: int
    compare_particles: int
    compare_dt: float
    out_dir: str | None

    @property
    def steps_per_slice(self) -> int:
        return int(round(self.slice_length / self.dt))

    @property
    def experiment_id(self) -> str:
        # hash only result-determining fields: the worker count and output
        # directory never change the numbers, and the id is embedded in
        # every CSV row
        payload = self.to_dict()
        payload["parareal"].pop("workers")
        payload["output"].pop("directory", None)
        digest = hashlib.sha256(
            json.dumps(payload, sort_keys=True).encode()).hexdigest()
        return f"{self.problem_kind}-{digest[:10]}"

    def to_dict(self) -> dict:
        d = {
            "schema_version": SCHEMA_VERSION,
            "problem": {"kind": self.problem_kind, **self.problem},
            "initial": dict(self.initial),
            "parareal": {
                "n_slices": self.n_slices,
                "iterations": self.iterations,
                "slice_length": self.slice_length,
                "dt": self.dt,
                "particles": self.particles,
                "noise_mode": self.noise_mode,
                "coarse": self.coarse,
                "replicates": self.replicates,
                "seed": self.seed,
                "workers": self.workers,
            },
            "integrator": {"rel_tol": self.rel_tol, "abs_tol": self.abs_tol},
            "errors": {"var_denominator": self.var_denominator,
                       "floor_replicas": self.floor_replicas},
            "output": {"histogram_slices": list(self.histogram_slices),
                       "histogram_iterations":
                           self.histogram_iterations
                           if isinstance(self.histogram_iterations, str)
                           else list(self.histogram_iterations)},
            "sweep": {"n_values": list(self.sweep_n_values)},
            "bounds": {"slice_lengths": list(self.bounds_slice_lengths)},
            "compare": {"t_end": self.compare_t_end,
                        "grid_points": self.compare_grid,
                        "particles": self.compare_particles,
                        "dt": self.compare_dt},
            "multimodal": {"fraction_weights": self.fraction_weights},
        }
        if self.stop_wasserstein_tol is not None:
            d["parareal"]["stop_wasserstein_tol"] = self.stop_wasserstein_tol
        if self.partition is not None:
            d["partition"] = {k: list(v) for k, v in self.partition.items()}
        if self.out_dir is not None:
            d["output"]["directory"] = self.out_dir
        return d


def _take(section: dict, name: str, allowed: set[str]) -> dict:
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(
            f"unknown keys in [{name}]: {', '.join(sorted(unknown))}")
    return dict(section)


def _number(section, key, default, kind=float, minimum=None, name=""):
    value = section.get(key, default)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{name}.{key} must be a number")
    value = kind(value)
    if minimum is not None and value < minimum:
        raise ConfigError(f"{name}.{key} must be >= {minimum}")
    return value


def resolve_config(raw: dict, seed_override: int | None = None,
                   workers_override: int | None = None) -> ExperimentConfig:
    """Fill defaults, validate and freeze a raw config dictionary."""
    raw = dict(raw)
    version = raw.pop("schema_version", None)
    if version != SCHEMA_VERSION:
        raise ConfigError(
            f"schema_version must be {SCHEMA_VERSION}, got {version!r}")
    known_sections = {"problem", "initial", "parareal", "partition",
                      "integrator", "errors", "output", "sweep", "bounds",
                      "compare", "multimodal"}
    unknown = set(raw) - known_sections
    if unknown:
        raise ConfigError(f"unknown sections: {', '.join(sorted(unknown))}")

    problem = dict(raw.get("problem", {}))
    kind = problem.pop("kind", None)
    if kind not in PROBLEM_KINDS:
        raise ConfigError(
            f"problem.kind must be one of {PROBLEM_KINDS}, got {kind!r}")
    defaults = dict(_PROBLEM_DEFAULTS[kind])
    unknown = set(problem) - set(defaults)
    if unknown:
        raise ConfigError(
            f"unknown problem parameters for {kind}: {', '.join(sorted(unknown))}")
    for key, value in problem.items():
        if isinstance(defaults[key], bool):
            if not isinstance(value, bool):
                raise ConfigError(f"problem.{key} must be a boolean")
            defaults[key] = value
        else:
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(f"problem.{key} must be a number")
            defaults[key] = float(value)
    problem = defaults

    initial = raw.get("initial") or dict(_INITIAL_DEFAULTS[kind])
    init_kind = initial.get("kind")
    if init_kind == "dirac":
        initial = _take(initial, "initial", {"kind", "x0"})
        initial["x0"] = _number(initial, "x0", 0.0, name="initial")
    elif init_kind == "normal":
        initial = _take(initial, "initial", {"kind", "mean", "variance"})
        initial["mean"] = _number(initial, "mean", 0.0, name="initial")
        initial["variance"] = _number(initial, "variance", 1.0,
                                      minimum=0.0, name="initial")
    else:
        raise ConfigError(
            f"initial.kind must be 'dirac' or 'normal', got {init_kind!r}")

    run_defaults = _RUN_DEFAULTS[kind]
    pr = _take(raw.get("parareal", {}), "parareal",
               {"n_slices", "iterations", "slice_length", "dt", "particles",
                "noise_mode", "coarse", "replicates", "seed", "workers",
                "stop_wasserstein_tol"})
    n_slices = _number(pr, "n_slices", run_defaults["n_slices"], int, 1,
                       "parareal")
    iterations = _number(pr, "iterations", n_slices, int, 0, "parareal")
    if iterations > n_slices:
        raise ConfigError("parareal.iterations must not exceed n_slices")
    slice_length = _number(pr, "slice_length", run_defaults["slice_length"],
                           float, None, "parareal")
    if slice_length <= 0:
        raise ConfigError("parareal.slice_length must be positive")
    dt = _number(pr, "dt", run_defaults["dt"], float, None, "parareal")
    if dt <= 0:
        raise ConfigError("parareal.dt must be positive")
    steps = slice_length / dt
    if abs(steps - round(steps)) > 1e-9 * max(steps, 1.0) or round(steps) < 1:
        raise ConfigError(
            f"slice_length {slice_length} is not an integer multiple of dt {dt}")
    particles = _number(pr, "particles", run_defaults["particles"], int, 1,
                        "parareal")
    noise_mode = pr.get("noise_mode", "frozen")
    if noise_mode not in ("frozen", "fresh"):
        raise ConfigError("parareal.noise_mode must be 'frozen' or 'fresh'")
    coarse = pr.get("coarse", "auto")
    if coarse not in COARSE_KINDS:
        raise ConfigError(f"parareal.coarse must be one of {COARSE_KINDS}")
    if coarse == "auto":
        coarse = _AUTO_COARSE[kind]
    replicates = _number(pr, "replicates", 1, int, 1, "parareal")
    seed = _number(pr, "seed", 20_240_601, int, 0, "parareal")
    workers = _number(pr, "workers", 1, int, 1, "parareal")
    stop_tol = pr.get("stop_wasserstein_tol")
    if stop_tol is not None:
        stop_tol = _number(pr, "stop_wasserstein_tol", None, float, 0.0,
                           "parareal")
    if seed_override is not None:
        seed = int(seed_override)
    if workers_override is not None:
        workers = int(workers_override)
        if workers < 1:
            raise ConfigError("workers must be at least 1")

    partition = raw.get("partition")
    if partition is not None:
        partition = _take(partition, "partition", {"separatrices", "peaks"})
        seps = partition.get("separatrices", [])
        peaks = partition.get("peaks")
        if not isinstance(seps, list) or (
                peaks is not None and not isinstance(peaks, list)):
            raise ConfigError("partition entries must be arrays of numbers")
        partition = {"separatrices": [float(s) for s in seps]}
        if peaks is not None:
            partition["peaks"] = [float(p) for p in peaks]

    integ = _take(raw.get("integrator", {}), "integrator",
                  {"rel_tol", "abs_tol"})
    rel_tol = _number(integ, "rel_tol", 1e-8, float, None, "integrator")
    abs_tol = _number(integ, "abs_tol", 1e-10, float, None, "integrator")
    if rel_tol <= 0 or abs_tol <= 0:
        raise ConfigError("integrator tolerances must be positive")

    err = _take(raw.get("errors", {}), "errors",
                {"var_denominator", "floor_replicas"})
    var_denominator = err.get("var_denominator", "variance")
    if var_denominator not in ("variance", "mean"):
        raise ConfigError("errors.var_denominator must be 'variance' or 'mean'")
    floor_replicas = _number(err, "floor_replicas", 4, int, 2, "errors")

    mm = _take(raw.get("multimodal", {}), "multimodal", {"fraction_weights"})
    fraction_weights = mm.get("fraction_weights", "plain")
    if fraction_weights not in ("plain", "gibbs"):
        raise ConfigError(
            "multimodal.fraction_weights must be 'plain' or 'gibbs'")

    out = _take(raw.get("output", {}), "output",
                {"directory", "histogram_slices", "histogram_iterations"})
    hist_slices = out.get("histogram_slices", [n_slices])
    if not isinstance(hist_slices, list) or not all(
            isinstance(h, int) and 1 <= h <= n_slices for h in hist_slices):
        raise ConfigError(
            "output.histogram_slices must be slice indices in [1, n_slices]")
    hist_iters = out.get("histogram_iterations", "all")
    if hist_iters != "all":
        if not isinstance(hist_iters, list) or not all(
                isinstance(h, int) and 0 <= h <= iterations for h in hist_iters):
            raise ConfigError(
                "output.histogram_iterations must be 'all' or iteration indices")
        hist_iters = tuple(hist_iters)
    out_dir = out.get("directory")

    sweep = _take(raw.get("sweep", {}), "sweep", {"n_values"})
    n_values = sweep.get("n_values", [10, 20])
    if not isinstance(n_values, list) or not all(
            isinstance(n, int) and n >= 1 for n in n_values):
        raise ConfigError("sweep.n_values must be positive integers")

    bounds = _take(raw.get("bounds", {}), "bounds", {"slice_lengths"})
    b_lengths = bounds.get("slice_lengths", [0.1, 2.0])
    if not isinstance(b_lengths, list) or not all(
            isinstance(x, (int, float)) and x > 0 for x in b_lengths):
        raise ConfigError("bounds.slice_lengths must be positive numbers")

    comp = _take(raw.get("compare", {}), "compare",
                 {"t_end", "grid_points", "particles", "dt"})
    compare_t_end = _number(comp, "t_end", 2.0, float, None, "compare")
    if compare_t_end <= 0:
        raise ConfigError("compare.t_end must be positive")
    compare_grid = _number(comp, "grid_points", 41, int, 2, "compare")
    compare_particles = _number(comp, "particles", 100_000, int, 2, "compare")
    compare_dt = _number(comp, "dt", dt, float, None, "compare")
    if compare_dt <= 0:
        raise ConfigError("compare.dt must be positive")

    return ExperimentConfig(
        problem_kind=kind, problem=problem, initial=initial,
        n_slices=n_slices, iterations=iterations, slice_length=slice_length,
        dt=dt, particles=particles, noise_mode=noise_mode, coarse=coarse,
        replicates=replicates, seed=seed, workers=workers,
        stop_wasserstein_tol=stop_tol, partition=partition,
        rel_tol=rel_tol, abs_tol=abs_tol, var_denominator=var_denominator,
        fraction_weights=fraction_weights, floor_replicas=floor_replicas,
        histogram_slices=tuple(hist_slices), histogram_iterations=hist_iters,
        sweep_n_values=tuple(n_values), bounds_slice_lengths=tuple(b_lengths),
        compare_t_end=compare_t_end, compare_grid=compare_grid,
        compare_particles=compare_particles, compare_dt=compare_dt,
        out_dir=out_dir,
    )


def lint(cfg: ExperimentConfig) -> list[str]:
    """Advisory warnings for configs that are legal but probably wasteful.

    Balancing the Euler-Maruyama bias O(dt) = O(1/n_steps) against the
    Monte Carlo noise O(1/sqrt(particles)) suggests particles on the
    order of n_steps**2; flag configs more than two decades away from
    that balance.  Warnings never block a run.
    """
    warnings = []
    n_steps = cfg.n_slices * cfg.steps_per_slice
    balanced = n_steps * n_steps
    ratio = cfg.particles / balanced
    if ratio < 0.01:
        warnings.append(
            f"particles={cfg.particles} is far below the bias/noise balance "
            f"particles ~ n_steps^2 = {balanced} for {n_steps} time steps; "
            "statistical error will dominate the time-stepping bias")
    elif ratio > 100.0:
        warnings.append(
            f"particles={cfg.particles} is far above the bias/noise balance "
            f"particles ~ n_steps^2 = {balanced} for {n_steps} time steps; "
            "time-stepping bias will dominate the statistical error")
    return warnings


def load_config(path, seed_override: int | None = None,
                workers_override: int | None = None) -> ExperimentConfig:
    """Load a TOML config file or the config block of a meta.json file."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        if path.suffix == ".json":
            payload = json.loads(path.read_text())
            raw = payload.get("config", payload)
        else:
            with open(path, "rb") as fh:
                raw = tomllib.load(fh)
    except (tomllib.TOMLDecodeError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    return resolve_config(raw, seed_override, workers_override)
