"""Convergence bounds, exact OU moment flows and speedup estimates.

The error of classical Parareal with scalar affine propagators obeys
(I - M_G) e^{k+1} = M_{F-G} e^k with M_beta the strictly lower triangular
Toeplitz matrix with band beta^{i-j-1}.  The two standard bounds derived from
that recursion are exposed here together with the exact infinity norm of
M_beta^k used to validate them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import BoundInapplicable, InvalidCostModel
from .models import PerturbedOUSpec


@dataclass(frozen=True)
class AffinePropagatorPair:
    """One time slice of an affine propagator: u -> multiplier * u + offset."""

    multiplier: float
    offset: float = 0.0

    def __call__(self, u: float) -> float:
        return self.multiplier * u + self.offset


def m_power_inf_norm(beta: float, n_slices: int, k: int) -> float:
    """Exact infinity norm of M(beta)^k for the (N+1)x(N+1) band matrix.

    M(beta)[i, j] = beta^(i-j-1) for i > j, zero elsewhere.  The k-th power
    has entries C(i-j-1, k-1) beta^(i-j-k), so the norm (attained on the last
    row) is sum_{m=0}^{N-k} C(m+k-1, k-1) |beta|^m; the matrix is nilpotent
    beyond k = N.
    """
    if n_slices < 1:
        raise ValueError("n_slices must be at least 1")
    if k < 0:
        raise ValueError("k must be nonnegative")
    if k == 0:
        return 1.0
    if k > n_slices:
        return 0.0
    b = abs(float(beta))
    total = 0.0
    for m in range(n_slices - k + 1):
        total += math.comb(m + k - 1, k - 1) * b ** m
    return total


def superlinear_bound(coarse_mult: float, fine_mult: float, n_slices: int,
                      k: int, initial_error: float) -> float:
    """Iteration-k error bound (rho_s^k / k!) prod_{j=1}^{k} (N - j) * e0.

    Valid whenever |coarse multiplier| <= 1; vanishes for k >= N because the
    error recursion is nilpotent.
    """
    if n_slices < 1:
        raise ValueError("n_slices must be at least 1")
    if k < 0:
        raise ValueError("k must be nonnegative")
    if initial_error < 0:
        raise ValueError("initial error must be nonnegative")
    if abs(coarse_mult) > 1.0:
        raise BoundInapplicable(
            f"superlinear bound needs |coarse multiplier| <= 1, got "
            f"{abs(coarse_mult):.6g}")
    rho = abs(fine_mult - coarse_mult)
    return rho ** k * math.comb(n_slices - 1, k) * initial_error


def linear_bound(coarse_mult: float, fine_mult: float, k: int,
                 initial_error: float) -> float:
    """Iteration-k error bound (|F - G| / (1 - |G|))^k * e0.

    Requires a contractive coarse propagator, |G| < 1.
    """
    if k < 0:
        raise ValueError("k must be nonnegative")
    if initial_error < 0:
        raise ValueError("initial error must be nonnegative")
    g = abs(coarse_mult)
    if g >= 1.0:
        raise BoundInapplicable(
            f"linear bound needs |coarse multiplier| < 1, got {g:.6g}")
    rho = abs(fine_mult - coarse_mult) / (1.0 - g)
    return rho ** k * initial_error


def ou_exact_moments(a: float, a_E: float, B: float, mean0: float,
                     var0: float, t):
    """Closed-form mean and variance of the mean-field OU process.

    M(t) = M0 exp((a + a_E) t)
    Sigma(t) = (Sigma0 + B^2/(2a)) exp(2 a t) - B^2/(2a),  a != 0
             = Sigma0 + B^2 t,                              a == 0
    """
    t = np.asarray(t, dtype=float)
    mean = mean0 * np.exp((a + a_E) * t)
    if a == 0.0:
        var = var0 + B * B * t
    else:
        c = B * B / (2.0 * a)
        var = (var0 + c) * np.exp(2.0 * a * t) - c
    if t.ndim == 0:
        return float(mean), float(var)
    return mean, var


@dataclass(frozen=True)
class OUSlicePropagators:
    """Exact per-slice propagators of the OU moment flows.

    ``mean_fine``/``var_fine`` propagate the true moment ODEs over one slice;
    the coarse pairs propagate the epsilon-perturbed flows.
    """

    mean_fine: AffinePropagatorPair
    mean_coarse: AffinePropagatorPair
    var_fine: AffinePropagatorPair
    var_coarse: AffinePropagatorPair


def _affine_exp(rate: float, source: float, span: float) -> AffinePropagatorPair:
    """Slice map of du/dt = rate * u + source over a span."""
    mult = math.exp(rate * span)
    if rate == 0.0:
        offset = source * span
    else:
        offset = source * (mult - 1.0) / rate
    return AffinePropagatorPair(mult, offset)


def ou_slice_propagators(spec: PerturbedOUSpec,
                         slice_length: float) -> OUSlicePropagators:
    """Exact fine and perturbed coarse slice propagators for mean/variance."""
    if slice_length <= 0:
        raise ValueError("slice_length must be positive")
    a, a_E, B = spec.a, spec.a_E, spec.B
    em, ev = spec.eps_mean, spec.eps_var
    return OUSlicePropagators(
        mean_fine=_affine_exp((a + a_E), 0.0, slice_length),
        mean_coarse=_affine_exp((a + a_E) * (1.0 + em), 0.0, slice_length),
        var_fine=_affine_exp(2.0 * a, B * B, slice_length),
        var_coarse=_affine_exp(2.0 * a * (1.0 + em),
                               B * B * (1.0 + ev) ** 2, slice_length),
    )


def ou_propagator_multipliers(spec: PerturbedOUSpec,
                              slice_length: float) -> dict[str, float]:
    """Per-slice multipliers of the exact and perturbed OU moment flows."""
    props = ou_slice_propagators(spec, slice_length)
    return {
        "mean_fine": props.mean_fine.multiplier,
        "mean_coarse": props.mean_coarse.multiplier,
        "var_fine": props.var_fine.multiplier,
        "var_coarse": props.var_coarse.multiplier,
    }


@dataclass(frozen=True)
class CostModel:
    """Wall-clock cost of one slice of each stage of the algorithm."""

    n_slices: int
    coarse_seconds: float
    fine_seconds: float
    restrict_seconds: float = 0.0
    match_seconds: float = 0.0

    def __post_init__(self):
        if self.n_slices < 1:
            raise InvalidCostModel("n_slices must be at least 1")
        if self.coarse_seconds <= 0 or self.fine_seconds <= 0:
            raise InvalidCostModel("coarse and fine timings must be positive")
        if self.restrict_seconds < 0 or self.match_seconds < 0:
            raise InvalidCostModel("coupling timings must be nonnegative")


def speedup(cost: CostModel, iterations: int) -> float:
    """Ideal speedup over sequential fine propagation with N parallel workers.

    S = N T_F / (N T_C + k (N T_C + T_F + T_R + T_M))
    """
    if iterations < 0:
        raise InvalidCostModel("iteration count must be nonnegative")
    n = cost.n_slices
    serial = n * cost.fine_seconds
    per_iter = (n * cost.coarse_seconds + cost.fine_seconds
                + cost.restrict_seconds + cost.match_seconds)
    return serial / (n * cost.coarse_seconds + iterations * per_iter)
