"""Exception types raised by the solvers, coupling operators and CLI."""

from __future__ import annotations


class McPararealError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(McPararealError):
    """Invalid or inconsistent experiment configuration."""


class NumericalBlowup(McPararealError):
    """A particle position became NaN or infinite during time stepping.

    Carries the slice index and step index where the blowup was detected.
    """

    def __init__(self, message: str, slice_index: int | None = None,
                 step_index: int | None = None):
        super().__init__(message)
        self.slice_index = slice_index
        self.step_index = step_index


class IntegrationFailure(McPararealError):
    """The adaptive ODE integrator exceeded its step budget or stalled."""


class SingularityError(McPararealError):
    """A moment-ODE right-hand side was evaluated at a removable-singular point."""


class InvalidPartition(McPararealError):
    """Region separatrices or peaks are not strictly increasing / inconsistent."""


class DegenerateMatch(McPararealError):
    """A zero-variance particle group cannot be scaled to positive variance."""

    def __init__(self, message: str, region: int | None = None):
        super().__init__(message)
        self.region = region


class BoundInapplicable(McPararealError):
    """A convergence bound was requested outside its hypotheses."""


class InvalidCostModel(McPararealError):
    """Nonpositive timings or inconsistent counts in a speedup estimate."""


class UnsupportedComparison(McPararealError):
    """Distance requested between ensembles of different particle counts."""


class DegenerateReference(McPararealError):
    """A relative error has a zero-norm reference in the denominator."""
