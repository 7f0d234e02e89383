"""Adaptive explicit Runge-Kutta 5(4) integration with PI step control.

Dormand-Prince coefficients (FSAL form): the fifth-order solution propagates,
the embedded fourth-order solution drives the error estimate against the
mixed tolerance abs_tol + rel_tol * |y|.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import IntegrationFailure

# Butcher tableau, exact rationals
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    np.array([]),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
    np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]),
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200,
                187 / 2100, 1 / 40])
_E = _B5 - _B4  # error estimator weights

_ORDER = 5.0
_SAFETY = 0.9
_MIN_FACTOR = 0.2
_MAX_FACTOR = 5.0
# PI exponents (Hairer II.4): err^(-0.7/p) * err_prev^(0.4/p)
_ALPHA = 0.7 / _ORDER
_BETA = 0.4 / _ORDER


@dataclass(frozen=True)
class IntegratorConfig:
    """Tolerances and budget for the adaptive integrator."""

    rel_tol: float = 1e-8
    abs_tol: float = 1e-10
    max_steps: int = 100_000
    first_step: float | None = None

    def __post_init__(self):
        if self.rel_tol <= 0 or self.abs_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_steps < 1:
            raise ValueError("max_steps must be at least 1")


def _rk_step(rhs, t, y, h, k1):
    """One Dormand-Prince step; returns (y5, error_vector, k7)."""
    k = [k1]
    for i in range(1, 7):
        yi = y + h * (np.dot(_A[i], k[:i]) if i > 1 else _A[i][0] * k[0])
        k.append(np.asarray(rhs(t + _C[i] * h, yi), dtype=float))
    k = np.array(k)
    y5 = y + h * (_B5 @ k)
    err = h * (_E @ k)
    return y5, err, k[6]


def integrate(rhs, y0, t0: float, t1: float,
              cfg: IntegratorConfig = IntegratorConfig()) -> np.ndarray:
    """Integrate dy/dt = rhs(t, y) from t0 to t1 adaptively.

    Raises IntegrationFailure when the step budget is exhausted, the step
    size underflows, or the right-hand side stops being finite.
    """
    y = np.atleast_1d(np.asarray(y0, dtype=float)).copy()
    span = t1 - t0
    if span < 0:
        raise ValueError("t1 must not precede t0")
    if span == 0:
        return y

    t = t0
    k1 = np.asarray(rhs(t, y), dtype=float)
    if not np.all(np.isfinite(k1)):
        raise IntegrationFailure(f"right-hand side not finite at t={t0}")
    h = cfg.first_step if cfg.first_step is not None else _initial_step(
        rhs, t0, y, k1, cfg)
    h = min(h, span)
    err_prev = 1.0
    min_step = 1e-14 * max(abs(t0), abs(t1), 1.0)

    for _ in range(cfg.max_steps):
        h = min(h, t1 - t)
        y_new, err_vec, k_last = _rk_step(rhs, t, y, h, k1)
        if not np.all(np.isfinite(y_new)):
            raise IntegrationFailure(
                f"solution not finite near t={t} with step {h}")
        scale = cfg.abs_tol + cfg.rel_tol * np.maximum(np.abs(y), np.abs(y_new))
        err_norm = float(np.sqrt(np.mean((err_vec / scale) ** 2)))

        if err_norm <= 1.0:
            t += h
            y = y_new
            k1 = k_last  # FSAL
            if t >= t1 - min_step:
                return y
            factor = _SAFETY * max(err_norm, 1e-10) ** (-_ALPHA) * err_prev ** _BETA
            err_prev = max(err_norm, 1e-10)
            h *= min(_MAX_FACTOR, max(_MIN_FACTOR, factor))
        else:
            factor = _SAFETY * err_norm ** (-_ALPHA)
            h *= min(1.0, max(_MIN_FACTOR, factor))
        if h < min_step:
            raise IntegrationFailure(
                f"step size underflow at t={t} (stalled integration)")

    raise IntegrationFailure(
        f"exceeded {cfg.max_steps} steps integrating [{t0}, {t1}]")


def _initial_step(rhs, t0, y0, f0, cfg):
    """Cheap first-step heuristic based on the solution and slope scales."""
    scale = cfg.abs_tol + cfg.rel_tol * np.abs(y0)
    d0 = float(np.sqrt(np.mean((y0 / scale) ** 2)))
    d1 = float(np.sqrt(np.mean((f0 / scale) ** 2)))
    if d0 < 1e-5 or d1 < 1e-5:
        return 1e-6
    return 0.01 * d0 / d1


def integrate_fixed(rhs, y0, t0: float, t1: float, n_steps: int) -> np.ndarray:
    """Fixed-step fifth-order solution, used for order verification."""
    if n_steps < 1:
        raise ValueError("n_steps must be at least 1")
    y = np.atleast_1d(np.asarray(y0, dtype=float)).copy()
    h = (t1 - t0) / n_steps
    for j in range(n_steps):
        t = t0 + j * h
        k1 = np.asarray(rhs(t, y), dtype=float)
        y, _, _ = _rk_step(rhs, t, y, h, k1)
        if not np.all(np.isfinite(y)):
            raise IntegrationFailure(f"solution not finite near t={t}")
    return y
