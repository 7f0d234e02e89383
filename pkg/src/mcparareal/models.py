"""Scalar McKean-Vlasov model definitions and benchmark factories.

Every model is a drift/diffusion pair a(x, s, t), b(x, s, t) where s is an
interaction statistic computed once per time step from the whole ensemble.
Three statistic kinds cover the benchmarks:

- MEAN_OF_F:      s = mean of f(X) over the ensemble (f defaults to identity),
- ROTATOR_SUM:    s = (mean of sin X, mean of cos X),
- EMPIRICAL_CDF:  s_p = (rank_p + 0.5) / P, one value per particle.

Analytic x-derivatives of the coefficients are carried alongside because the
moment ODEs need them; ``check_derivatives`` verifies them against finite
differences.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import InvalidPartition, SingularityError
from .state import RegionPartition

TWO_PI = 2.0 * math.pi


class StatisticKind(enum.Enum):
    MEAN_OF_F = "mean-of-f"
    EMPIRICAL_CDF = "empirical-cdf"
    ROTATOR_SUM = "rotator-sum"


@dataclass(frozen=True)
class McKeanVlasovModel:
    """Coefficients and interaction statistic of dX = a dt + b dW.

    ``drift`` and ``diffusion`` are vectorized over x; s is whatever
    ``statistic_kind`` dictates.  ``enriched_moment_rhs``, when present, is a
    model-specific variance-enriched closure (M, Sigma, t) -> (dM, dSigma)
    used by the Taylor moment model.  ``post_step`` is applied to positions
    after every Euler-Maruyama step (e.g. periodic wrapping).
    """

    name: str
    drift: Callable
    diffusion: Callable
    drift_dx: Callable
    diffusion_dx: Callable
    diffusion_dxx: Callable
    statistic_kind: StatisticKind
    f: Callable | None = None
    f_dd: Callable | None = None
    post_step: Callable | None = None
    enriched_moment_rhs: Callable | None = None


def ensemble_statistic(model: McKeanVlasovModel, positions: np.ndarray):
    """Interaction statistic of an ensemble, computed in O(P)."""
    x = np.asarray(positions, dtype=float)
    kind = model.statistic_kind
    if kind is StatisticKind.MEAN_OF_F:
        values = x if model.f is None else model.f(x)
        return float(np.mean(values))
    if kind is StatisticKind.ROTATOR_SUM:
        return float(np.mean(np.sin(x))), float(np.mean(np.cos(x)))
    if kind is StatisticKind.EMPIRICAL_CDF:
        # mid-rank CDF estimate per particle, ties broken by particle index
        order = np.argsort(x, kind="stable")
        ranks = np.empty(len(x), dtype=float)
        ranks[order] = np.arange(len(x), dtype=float)
        return (ranks + 0.5) / len(x)
    raise ValueError(f"unknown statistic kind {kind}")


def point_statistic(model: McKeanVlasovModel, m: float):
    """Statistic of a point mass at m (first-order moment closure)."""
    kind = model.statistic_kind
    if kind is StatisticKind.MEAN_OF_F:
        return float(m) if model.f is None else float(model.f(m))
    if kind is StatisticKind.ROTATOR_SUM:
        return math.sin(m), math.cos(m)
    if kind is StatisticKind.EMPIRICAL_CDF:
        # the CDF of a point mass evaluated at its own atom, mid-convention
        return 0.5
    raise ValueError(f"unknown statistic kind {kind}")


def mixture_statistic(model: McKeanVlasovModel, means, fractions):
    """Fraction-weighted point statistic of a mixture of point masses."""
    if model.statistic_kind is not StatisticKind.MEAN_OF_F:
        raise ValueError("mixture closure requires a mean-of-f statistic")
    total = 0.0
    for a, m in zip(fractions, means):
        total += a * (float(m) if model.f is None else float(model.f(m)))
    return total


# ---------------------------------------------------------------------------
# model specifications
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PerturbedOUSpec:
    """Mean-field Ornstein-Uhlenbeck: a(x, m) = a x + a_E m, b = B.

    ``eps_mean`` and ``eps_var`` perturb only the coarse moment propagator
    (see ``moments.perturbed_ou_rhs``); the particle dynamics ignore them.
    """

    a: float = -1.0
    a_E: float = -0.5
    B: float = 0.01
    eps_mean: float = 1.0
    eps_var: float = 1.0

    def __post_init__(self):
        if self.B < 0:
            raise ValueError("diffusion constant B must be nonnegative")


@dataclass(frozen=True)
class PlaneRotatorSpec:
    """Mean-field plane rotator in an external field.

    a(x, (S, C)) = K (cos x * S - sin x * C) - sin x,  b = sqrt(2 kBT).
    With ``wrap`` set, positions are reduced modulo 2 pi after every step.
    """

    K: float = 0.5
    kBT: float = 0.1
    wrap: bool = True

    def __post_init__(self):
        if self.kBT < 0:
            raise ValueError("temperature kBT must be nonnegative")

    @property
    def sigma_sq(self) -> float:
        return 2.0 * self.kBT


@dataclass(frozen=True)
class BurgersSpec:
    """Rank-based interaction: a = 1 - CDF_at_particle, b = sigma."""

    sigma: float = math.sqrt(0.2)

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")


@dataclass(frozen=True)
class DoubleWellSpec:
    """Quartic double well with mean attraction and a tilt.

    a(x, m) = -(4 alpha x^3 - 2 gamma x - beta m + J sqrt(alpha / (2 gamma))),
    b = sigma.  The potential is V(x) = alpha x^4 - gamma x^2 + tilt * x with
    tilt = J sqrt(alpha / (2 gamma)).
    """

    alpha: float = 0.25
    gamma: float = 0.5
    beta: float = 0.3
    J: float = 0.0
    sigma: float = 1.0

    def __post_init__(self):
        if self.alpha <= 0 or self.gamma <= 0:
            raise ValueError("alpha and gamma must be positive")
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")

    @property
    def tilt(self) -> float:
        return self.J * math.sqrt(self.alpha / (2.0 * self.gamma))

    def potential(self, x):
        x = np.asarray(x, dtype=float)
        return self.alpha * x**4 - self.gamma * x**2 + self.tilt * x

    def critical_points(self) -> tuple[float, float, float]:
        """(left minimum, saddle, right minimum) of the potential."""
        roots = np.roots([4.0 * self.alpha, 0.0, -2.0 * self.gamma, self.tilt])
        real = np.sort(roots[np.abs(roots.imag) < 1e-9].real)
        if len(real) != 3:
            raise InvalidPartition(
                "potential is not double-welled for these parameters")
        return float(real[0]), float(real[1]), float(real[2])

    def default_partition(self) -> RegionPartition:
        left, saddle, right = self.critical_points()
        return RegionPartition(separatrices=(saddle,), peaks=(left, right))


@dataclass(frozen=True)
class LinearMcKVSpec:
    """Linear model: a = A x + A_E m + A_0, b = B x + B_E m + B_0.

    Coefficients may be constants or callables of t.
    """

    A: float | Callable = -1.0
    A_E: float | Callable = 0.0
    A_0: float | Callable = 0.0
    B: float | Callable = 0.0
    B_E: float | Callable = 0.0
    B_0: float | Callable = 1.0


def _as_fn(c) -> Callable[[float], float]:
    if callable(c):
        return c
    value = float(c)
    return lambda t: value


# ---------------------------------------------------------------------------
# initial distributions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class InitialDistribution:
    """Sampleable initial law with known mean and variance."""

    kind: str
    mean: float
    variance: float
    sampler: Callable | None = None

    @staticmethod
    def dirac(x0: float) -> "InitialDistribution":
        return InitialDistribution("dirac", float(x0), 0.0)

    @staticmethod
    def normal(mean: float, variance: float) -> "InitialDistribution":
        if variance < 0:
            raise ValueError("variance must be nonnegative")
        return InitialDistribution("normal", float(mean), float(variance))

    @staticmethod
    def custom(sampler: Callable, mean: float, variance: float) -> "InitialDistribution":
        return InitialDistribution("custom", float(mean), float(variance), sampler)

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        if count < 1:
            raise ValueError("particle count must be at least 1")
        if self.kind == "dirac":
            return np.full(count, self.mean, dtype=float)
        if self.kind == "normal":
            return rng.normal(self.mean, math.sqrt(self.variance), count)
        if self.kind == "custom":
            return np.asarray(self.sampler(rng, count), dtype=float)
        raise ValueError(f"unknown initial distribution kind {self.kind}")


# ---------------------------------------------------------------------------
# factories
# ---------------------------------------------------------------------------

def make_perturbed_ou(spec: PerturbedOUSpec) -> McKeanVlasovModel:
    a, a_E, B = spec.a, spec.a_E, spec.B

    def drift(x, s, t):
        return a * x + a_E * s

    return McKeanVlasovModel(
        name="perturbed-ou",
        drift=drift,
        diffusion=lambda x, s, t: np.full_like(np.asarray(x, float), B),
        drift_dx=lambda x, s, t: np.full_like(np.asarray(x, float), a),
        diffusion_dx=lambda x, s, t: np.zeros_like(np.asarray(x, float)),
        diffusion_dxx=lambda x, s, t: np.zeros_like(np.asarray(x, float)),
        statistic_kind=StatisticKind.MEAN_OF_F,
    )


def _wrap_positions(x: np.ndarray) -> np.ndarray:
    return np.mod(x, TWO_PI)


def make_plane_rotator(spec: PlaneRotatorSpec) -> McKeanVlasovModel:
    K = spec.K
    b_const = math.sqrt(spec.sigma_sq)
    sigma_sq = spec.sigma_sq

    def drift(x, s, t):
        S, C = s
        return K * (np.cos(x) * S - np.sin(x) * C) - np.sin(x)

    def drift_dx(x, s, t):
        S, C = s
        return K * (-np.sin(x) * S - np.cos(x) * C) - np.cos(x)

    def enriched_rhs(m, var, t):
        sin_m, cos_m = math.sin(m), math.cos(m)
        if abs(sin_m) < 1e-8 or abs(cos_m) < 1e-8:
            raise SingularityError(
                f"enriched rotator closure is singular at mean {m!r}")
        d_mean = -sin_m + var / (2.0 * sin_m)
        d_var = -2.0 * (-K - cos_m + var / (2.0 * cos_m)) * var + sigma_sq
        return d_mean, d_var

    return McKeanVlasovModel(
        name="plane-rotator",
        drift=drift,
        diffusion=lambda x, s, t: np.full_like(np.asarray(x, float), b_const),
        drift_dx=drift_dx,
        diffusion_dx=lambda x, s, t: np.zeros_like(np.asarray(x, float)),
        diffusion_dxx=lambda x, s, t: np.zeros_like(np.asarray(x, float)),
        statistic_kind=StatisticKind.ROTATOR_SUM,
        post_step=_wrap_positions if spec.wrap else None,
        enriched_moment_rhs=enriched_rhs,
    )


def make_burgers(spec: BurgersSpec) -> McKeanVlasovModel:
    sigma = spec.sigma

    def drift(x, s, t):
        # s is the per-particle mid-rank CDF value; x enters only through it
        return 1.0 - s

    return McKeanVlasovModel(
        name="burgers",
        drift=drift,
        diffusion=lambda x, s, t: np.full_like(np.asarray(x, float), sigma),
        drift_dx=lambda x, s, t: np.zeros_like(np.asarray(x, float)),
        diffusion_dx=lambda x, s, t: np.zeros_like(np.asarray(x, float)),
        diffusion_dxx=lambda x, s, t: np.zeros_like(np.asarray(x, float)),
        statistic_kind=StatisticKind.EMPIRICAL_CDF,
    )


def make_double_well(spec: DoubleWellSpec) -> McKeanVlasovModel:
    alpha, gamma, beta = spec.alpha, spec.gamma, spec.beta
    tilt, sigma = spec.tilt, spec.sigma

    def drift(x, s, t):
        return -(4.0 * alpha * x**3 - 2.0 * gamma * x - beta * s + tilt)

    def drift_dx(x, s, t):
        return -(12.0 * alpha * x**2 - 2.0 * gamma)

    return McKeanVlasovModel(
        name="double-well",
        drift=drift,
        diffusion=lambda x, s, t: np.full_like(np.asarray(x, float), sigma),
        drift_dx=drift_dx,
        diffusion_dx=lambda x, s, t: np.zeros_like(np.asarray(x, float)),
        diffusion_dxx=lambda x, s, t: np.zeros_like(np.asarray(x, float)),
        statistic_kind=StatisticKind.MEAN_OF_F,
    )


def make_linear(spec: LinearMcKVSpec) -> McKeanVlasovModel:
    A, A_E, A_0 = _as_fn(spec.A), _as_fn(spec.A_E), _as_fn(spec.A_0)
    B, B_E, B_0 = _as_fn(spec.B), _as_fn(spec.B_E), _as_fn(spec.B_0)

    return McKeanVlasovModel(
        name="linear",
        drift=lambda x, s, t: A(t) * x + A_E(t) * s + A_0(t),
        diffusion=lambda x, s, t: B(t) * x + B_E(t) * s + B_0(t),
        drift_dx=lambda x, s, t: np.full_like(np.asarray(x, float), A(t)),
        diffusion_dx=lambda x, s, t: np.full_like(np.asarray(x, float), B(t)),
        diffusion_dxx=lambda x, s, t: np.zeros_like(np.asarray(x, float)),
        statistic_kind=StatisticKind.MEAN_OF_F,
    )


def check_derivatives(model: McKeanVlasovModel, points, statistics, times,
                      h: float = 1e-6) -> dict[str, float]:
    """Max relative mismatch of analytic x-derivatives vs central differences.

    Relative to max(1, |finite difference|) so flat coefficients compare on
    an absolute scale.
    """
    worst = {"drift_dx": 0.0, "diffusion_dx": 0.0, "diffusion_dxx": 0.0}
    for x in points:
        for s in statistics:
            for t in times:
                xp, xm = x + h, x - h
                fd_a = (model.drift(xp, s, t) - model.drift(xm, s, t)) / (2 * h)
                fd_b = (model.diffusion(xp, s, t) - model.diffusion(xm, s, t)) / (2 * h)
                fd_b2 = (model.diffusion(xp, s, t) - 2 * model.diffusion(x, s, t)
                         + model.diffusion(xm, s, t)) / (h * h)
                for key, analytic, fd in (
                        ("drift_dx", model.drift_dx(x, s, t), fd_a),
                        ("diffusion_dx", model.diffusion_dx(x, s, t), fd_b),
                        ("diffusion_dxx", model.diffusion_dxx(x, s, t), fd_b2)):
                    err = abs(float(analytic) - float(fd)) / max(1.0, abs(float(fd)))
                    worst[key] = max(worst[key], err)
    return worst
