"""Moment ODE coarse models: first-order, enriched, rank-based and multimodal.

All right-hand sides act on a packed vector [means..., variances...,
fractions...] so one adaptive integrator serves every closure.  The generic
first-order closure evaluates the SDE coefficients at the mean with the
interaction statistic of a point mass:

    dM/dt     = a(M, s(M), t) + 1/2 b_xx(M, s(M), t)
    dSigma/dt = (2 a_x + b_x^2) Sigma + b^2
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import McPararealError
from .models import (McKeanVlasovModel, PerturbedOUSpec, StatisticKind,
                     mixture_statistic, point_statistic)
from .rk54 import IntegratorConfig, integrate
from .state import MacroState, RegionPartition

SQRT_2PI = math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class MomentODE:
    """Packed-vector moment model with a fixed region count."""

    rhs: Callable  # (t, y) -> dy/dt on the packed vector
    n_regions: int
    variant: str
    has_fraction_dynamics: bool = False


def pack_state(state: MacroState) -> np.ndarray:
    return np.array(state.means + state.variances + state.fractions, dtype=float)


def unpack_state(y: np.ndarray, n_regions: int) -> MacroState:
    y = np.asarray(y, dtype=float)
    if y.shape != (3 * n_regions,):
        raise ValueError(f"expected packed vector of length {3 * n_regions}")
    return MacroState(tuple(y[:n_regions]),
                      tuple(y[n_regions:2 * n_regions]),
                      tuple(y[2 * n_regions:]))


def unimodal_rhs(model: McKeanVlasovModel) -> MomentODE:
    """Single-region first-order closure; fractions stay constant."""
    if model.statistic_kind is StatisticKind.EMPIRICAL_CDF:
        raise ValueError(
            "rank-interaction models need their dedicated moment model "
            "(burgers_rhs); the point-mass closure loses the variance dynamics")

    def rhs(t, y):
        m, var, _ = y
        s = point_statistic(model, m)
        d_mean = float(model.drift(m, s, t)) + 0.5 * float(model.diffusion_dxx(m, s, t))
        b = float(model.diffusion(m, s, t))
        b_x = float(model.diffusion_dx(m, s, t))
        d_var = (2.0 * float(model.drift_dx(m, s, t)) + b_x * b_x) * var + b * b
        return np.array([d_mean, d_var, 0.0])

    return MomentODE(rhs, 1, "first-order")


def taylor_enriched_rhs(model: McKeanVlasovModel) -> MomentODE:
    """Variance-enriched single-region closure.

    Uses the model's own enriched closure when it defines one; otherwise
    enriches the interaction statistic to f(M) + (Sigma/2) f''(M), which
    reduces to the first-order closure for linear f.
    """
    if model.enriched_moment_rhs is not None:
        custom = model.enriched_moment_rhs

        def rhs(t, y):
            m, var, _ = y
            d_mean, d_var = custom(m, var, t)
            return np.array([float(d_mean), float(d_var), 0.0])

        return MomentODE(rhs, 1, "taylor")

    if model.statistic_kind is not StatisticKind.MEAN_OF_F:
        raise ValueError(
            f"model {model.name!r} has no enriched closure and no mean-of-f "
            "statistic to enrich")

    def f_val(m):
        return m if model.f is None else float(model.f(m))

    def f_dd_val(m):
        return 0.0 if model.f_dd is None else float(model.f_dd(m))

    def rhs(t, y):
        m, var, _ = y
        s = f_val(m) + 0.5 * var * f_dd_val(m)
        d_mean = float(model.drift(m, s, t)) + 0.5 * float(model.diffusion_dxx(m, s, t))
        b = float(model.diffusion(m, s, t))
        b_x = float(model.diffusion_dx(m, s, t))
        d_var = (2.0 * float(model.drift_dx(m, s, t)) + b_x * b_x) * var + b * b
        return np.array([d_mean, d_var, 0.0])

    return MomentODE(rhs, 1, "taylor")


def perturbed_ou_rhs(spec: PerturbedOUSpec) -> MomentODE:
    """Deliberately perturbed OU moment flow used as the coarse propagator.

    dM/dt = (a + a_E)(1 + eps_mean) M
    dSigma/dt = 2 a (1 + eps_mean) Sigma + B^2 (1 + eps_var)^2
    """
    mean_rate = (spec.a + spec.a_E) * (1.0 + spec.eps_mean)
    var_rate = 2.0 * spec.a * (1.0 + spec.eps_mean)
    var_source = spec.B ** 2 * (1.0 + spec.eps_var) ** 2

    def rhs(t, y):
        m, var, _ = y
        return np.array([mean_rate * m, var_rate * var + var_source, 0.0])

    return MomentODE(rhs, 1, "perturbed-ou")


def burgers_rhs(sigma: float) -> MomentODE:
    """Rank-interaction moment model.

    dM/dt = 1/2 exactly; the variance relaxes to the traveling-profile value,
    dSigma/dt = -(2 / sqrt(2 pi)) sqrt(Sigma) + sigma^2.  Transient negative
    variances (possible inside corrected macro states) contribute no decay.
    """
    sig_sq = float(sigma) ** 2

    def rhs(t, y):
        _, var, _ = y
        d_var = -(2.0 / SQRT_2PI) * math.sqrt(max(var, 0.0)) + sig_sq
        return np.array([0.5, d_var, 0.0])

    return MomentODE(rhs, 1, "first-order")


def multimodal_rhs(model: McKeanVlasovModel, partition: RegionPartition,
                   potential: Callable, sigma: float,
                   weight_mode: str = "plain") -> MomentODE:
    """Per-region first-order closure with relaxing region fractions.

    The interaction statistic is closed as the fraction-weighted mixture of
    per-region point statistics.  Fractions relax toward potential-derived
    weights at rate sigma^2 / (2 d_i) with d_i the distance to the adjacent
    peak; for two regions the rate is region-uniform, which conserves the
    fraction sum exactly.
    """
    n = partition.n_regions
    if n < 2:
        raise ValueError("multimodal closure needs at least two regions")
    peaks = np.asarray(partition.peaks, dtype=float)
    if weight_mode == "plain":
        w = np.exp(-np.asarray(potential(peaks), dtype=float))
    elif weight_mode == "gibbs":
        w = np.exp(-np.asarray(potential(peaks), dtype=float) / (2.0 * sigma ** 2))
    else:
        raise ValueError(f"unknown weight mode {weight_mode!r}")
    targets = w / np.sum(w)

    gaps = np.abs(np.diff(peaks))
    dists = np.empty(n)
    dists[0] = gaps[0]
    dists[1:] = gaps
    rates = sigma ** 2 / (2.0 * dists)

    def rhs(t, y):
        means = y[:n]
        variances = y[n:2 * n]
        fractions = y[2 * n:]
        s = mixture_statistic(model, means, fractions)
        d_means = np.empty(n)
        d_vars = np.empty(n)
        for i in range(n):
            m = means[i]
            d_means[i] = float(model.drift(m, s, t)) \
                + 0.5 * float(model.diffusion_dxx(m, s, t))
            b = float(model.diffusion(m, s, t))
            b_x = float(model.diffusion_dx(m, s, t))
            d_vars[i] = (2.0 * float(model.drift_dx(m, s, t)) + b_x * b_x) \
                * variances[i] + b * b
        d_fracs = -rates * (fractions - targets)
        return np.concatenate([d_means, d_vars, d_fracs])

    return MomentODE(rhs, n, "multimodal", has_fraction_dynamics=True)


def integrate_macro(ode: MomentODE, state: MacroState, t0: float, t1: float,
                    cfg: IntegratorConfig = IntegratorConfig()) -> MacroState:
    """Propagate a macro state through the moment ODE over [t0, t1]."""
    if state.n_regions != ode.n_regions:
        raise McPararealError(
            f"macro state has {state.n_regions} regions, moment model expects "
            f"{ode.n_regions}")
    y1 = integrate(ode.rhs, pack_state(state), t0, t1, cfg)
    return unpack_state(y1, ode.n_regions)
