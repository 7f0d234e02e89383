"""Error metrics: 1-D Wasserstein distance, relative iterate errors and the
Monte Carlo statistical floor.

Iterate errors follow the reference-relative construction used throughout the
experiments: with u_n^K the final iterate as reference,

    E_mean(k) = ||mean(u_n^k) - mean(u_n^K)||_2 / ||mean(u_n^K)||_2
    E_var(k)  = ||var(u_n^k) - var(u_n^K)||_2 / ||var(u_n^K)||_2
    E_W(k)    = ||W1(u_n^k, u_n^K)||_2 / ||mean(u_n^K)||_2

with the 2-norm over interior slice boundaries n = 1..N.  The variance error
uses a variance-normed denominator by default; the mean-normed variant is
available behind ``var_denominator="mean"``.  For comparisons across
different N the raw 2-norms divided by sqrt(N) are carried alongside.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .errors import DegenerateReference, UnsupportedComparison
from .particles import ParticleEnsemble


def _positions(ens) -> np.ndarray:
    if isinstance(ens, ParticleEnsemble):
        return ens.positions
    return np.asarray(ens, dtype=float)


def wasserstein_1d(a, b) -> float:
    """W1 distance of two equally sized empirical measures.

    For equal-size samples the optimal coupling is the sorted pairing:
    (1/P) sum_i |a_(i) - b_(i)|.
    """
    xa, xb = _positions(a), _positions(b)
    if xa.size != xb.size:
        raise UnsupportedComparison(
            f"ensembles have different sizes {xa.size} and {xb.size}")
    if xa.size == 0:
        raise UnsupportedComparison("ensembles must be nonempty")
    return float(np.mean(np.abs(np.sort(xa) - np.sort(xb))))


@dataclass(frozen=True)
class ErrorReport:
    """Relative errors of one iterate against the reference iterate."""

    iteration: int
    reference_iteration: int
    e_mean: float
    e_var: float
    e_wass: float
    mean_err_per_slice: tuple[float, ...]
    var_err_per_slice: tuple[float, ...]
    wass_per_slice: tuple[float, ...]
    n_slices: int
    normalized_mean: float   # ||mean errors||_2 / sqrt(N)
    normalized_var: float
    normalized_wass: float
    var_denominator: str


def _norm(values: np.ndarray) -> float:
    return float(np.sqrt(np.sum(values ** 2)))


def relative_errors(trace, k: int, reference_k: int | None = None,
                    var_denominator: str = "variance") -> ErrorReport:
    """Errors of iterate k against the (default final) reference iterate.

    Requires the trace to retain ensemble snapshots.
    """
    if var_denominator not in ("variance", "mean"):
        raise ValueError(f"unknown variance denominator {var_denominator!r}")
    if trace.snapshots is None:
        raise ValueError("trace has no snapshots; rerun with retention enabled")
    ref_k = trace.iterations if reference_k is None else reference_k
    if not (0 <= k <= trace.iterations and 0 <= ref_k <= trace.iterations):
        raise ValueError("iteration index out of range")

    n_slices = trace.n_slices
    cur = trace.snapshots[k]
    ref = trace.snapshots[ref_k]

    mean_err = np.empty(n_slices)
    var_err = np.empty(n_slices)
    wass = np.empty(n_slices)
    ref_means = np.empty(n_slices)
    ref_vars = np.empty(n_slices)
    for n in range(1, n_slices + 1):
        xc, xr = cur[n].positions, ref[n].positions
        ref_means[n - 1] = np.mean(xr)
        ref_vars[n - 1] = np.var(xr)
        mean_err[n - 1] = np.mean(xc) - ref_means[n - 1]
        var_err[n - 1] = np.var(xc) - ref_vars[n - 1]
        wass[n - 1] = wasserstein_1d(xc, xr)

    denom_mean = _norm(ref_means)
    if denom_mean == 0.0:
        raise DegenerateReference("reference mean trajectory has zero norm")
    if var_denominator == "variance":
        denom_var = _norm(ref_vars)
        if denom_var == 0.0:
            raise DegenerateReference(
                "reference variance trajectory has zero norm")
    else:
        denom_var = denom_mean

    sqrt_n = math.sqrt(n_slices)
    return ErrorReport(
        iteration=k,
        reference_iteration=ref_k,
        e_mean=_norm(mean_err) / denom_mean,
        e_var=_norm(var_err) / denom_var,
        e_wass=_norm(wass) / denom_mean,
        mean_err_per_slice=tuple(np.abs(mean_err)),
        var_err_per_slice=tuple(np.abs(var_err)),
        wass_per_slice=tuple(wass),
        n_slices=n_slices,
        normalized_mean=_norm(mean_err) / sqrt_n,
        normalized_var=_norm(var_err) / sqrt_n,
        normalized_wass=_norm(wass) / sqrt_n,
        var_denominator=var_denominator,
    )


def statistical_floor(replicas) -> float:
    """Mean pairwise W1 distance among independent equally sized ensembles."""
    replicas = list(replicas)
    if len(replicas) < 2:
        raise ValueError("need at least two replicas for a floor estimate")
    total, count = 0.0, 0
    for a, b in combinations(replicas, 2):
        total += wasserstein_1d(a, b)
        count += 1
    return total / count


def moment_spread(replicas) -> tuple[float, float]:
    """Mean pairwise |mean difference| and |variance difference|."""
    replicas = [_positions(r) for r in replicas]
    if len(replicas) < 2:
        raise ValueError("need at least two replicas for a spread estimate")
    means = [float(np.mean(r)) for r in replicas]
    variances = [float(np.var(r)) for r in replicas]
    pairs = list(combinations(range(len(replicas)), 2))
    mean_spread = sum(abs(means[i] - means[j]) for i, j in pairs) / len(pairs)
    var_spread = sum(abs(variances[i] - variances[j]) for i, j in pairs) / len(pairs)
    return mean_spread, var_spread


@dataclass(frozen=True)
class FloorEstimate:
    """Statistical plateau of the relative error metrics.

    Computed from independent serial fine solutions exactly as
    ``relative_errors`` computes iterate errors, averaged over replica pairs.
    """

    e_mean: float
    e_var: float
    e_wass: float
    n_replicas: int


def floor_from_references(reference_paths,
                          var_denominator: str = "variance") -> FloorEstimate:
    """Floor estimate from >= 2 independent fine trajectories.

    Each trajectory is a list of ensembles indexed by slice boundary 0..N;
    index 0 is ignored (all replicas share the initial condition in law).
    """
    paths = [list(p) for p in reference_paths]
    if len(paths) < 2:
        raise ValueError("need at least two reference trajectories")
    n_slices = len(paths[0]) - 1
    if any(len(p) != n_slices + 1 for p in paths):
        raise ValueError("reference trajectories must share the slice count")

    sorted_pos = [[np.sort(_positions(p[n])) for n in range(1, n_slices + 1)]
                  for p in paths]
    means = np.array([[float(np.mean(path[n])) for n in range(n_slices)]
                      for path in sorted_pos])
    variances = np.array([[float(np.var(path[n])) for n in range(n_slices)]
                          for path in sorted_pos])

    denom_mean = float(np.mean([_norm(m) for m in means]))
    if denom_mean == 0.0:
        raise DegenerateReference("reference mean trajectories have zero norm")
    if var_denominator == "variance":
        denom_var = float(np.mean([_norm(v) for v in variances]))
        if denom_var == 0.0:
            raise DegenerateReference(
                "reference variance trajectories have zero norm")
    else:
        denom_var = denom_mean

    num_mean = num_var = num_wass = 0.0
    pairs = list(combinations(range(len(paths)), 2))
    for i, j in pairs:
        num_mean += _norm(means[i] - means[j])
        num_var += _norm(variances[i] - variances[j])
        w = np.array([float(np.mean(np.abs(sorted_pos[i][n] - sorted_pos[j][n])))
                      for n in range(n_slices)])
        num_wass += _norm(w)
    count = len(pairs)
    return FloorEstimate(
        e_mean=num_mean / count / denom_mean,
        e_var=num_var / count / denom_var,
        e_wass=num_wass / count / denom_mean,
        n_replicas=len(paths),
    )
