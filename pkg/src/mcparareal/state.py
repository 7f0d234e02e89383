"""Macroscopic state (per-region moments and fractions) and region partitions."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidPartition


@dataclass(frozen=True)
class RegionPartition:
    """Partition of the real line into half-open regions [s_{i-1}, s_i).

    ``separatrices`` are the strictly increasing interior boundaries; an empty
    tuple means a single region covering the whole line.  ``peaks`` holds one
    representative location per region (the local minimum of the potential for
    metastable problems); they drive the fraction relaxation dynamics and act
    as fallback centers for empty regions.
    """

    separatrices: tuple[float, ...] = ()
    peaks: tuple[float, ...] | None = None

    def __post_init__(self):
        seps = tuple(float(s) for s in self.separatrices)
        object.__setattr__(self, "separatrices", seps)
        if any(not math.isfinite(s) for s in seps):
            raise InvalidPartition("separatrices must be finite")
        if any(b <= a for a, b in zip(seps, seps[1:])):
            raise InvalidPartition("separatrices must be strictly increasing")
        n = len(seps) + 1
        if self.peaks is None:
            if n == 1:
                object.__setattr__(self, "peaks", (0.0,))
                return
            raise InvalidPartition("peaks are required for multi-region partitions")
        peaks = tuple(float(p) for p in self.peaks)
        object.__setattr__(self, "peaks", peaks)
        if len(peaks) != n:
            raise InvalidPartition(
                f"expected {n} peaks for {n} regions, got {len(peaks)}")
        if any(not math.isfinite(p) for p in peaks):
            raise InvalidPartition("peaks must be finite")
        if any(b <= a for a, b in zip(peaks, peaks[1:])):
            raise InvalidPartition("peaks must be strictly increasing")
        for i, p in enumerate(peaks):
            lo, hi = self.bounds(i)
            if not (lo <= p < hi):
                raise InvalidPartition(
                    f"peak {p} lies outside region {i} = [{lo}, {hi})")

    @property
    def n_regions(self) -> int:
        return len(self.separatrices) + 1

    def bounds(self, i: int) -> tuple[float, float]:
        """Half-open bounds [lo, hi) of region i, infinite at the ends."""
        seps = self.separatrices
        lo = seps[i - 1] if i > 0 else -math.inf
        hi = seps[i] if i < len(seps) else math.inf
        return lo, hi

    def center(self, i: int) -> float:
        """Midpoint of a bounded region, else the region's peak."""
        lo, hi = self.bounds(i)
        if math.isfinite(lo) and math.isfinite(hi):
            return 0.5 * (lo + hi)
        return self.peaks[i]

    def assign(self, positions: np.ndarray) -> np.ndarray:
        """Region index of each position (membership by current location)."""
        if not self.separatrices:
            return np.zeros(len(positions), dtype=np.intp)
        return np.searchsorted(np.asarray(self.separatrices), positions,
                               side="right")


SINGLE_REGION = RegionPartition()


@dataclass(frozen=True)
class MacroState:
    """Per-region mean, population variance and particle fraction.

    Values are stored raw: the additive Parareal correction can transiently
    produce negative variances or fractions outside [0, 1], and those raw
    values are kept so the update remains exactly telescoping.  Consumers that
    need physical states clamp explicitly (see ``coupling.match``).
    """

    means: tuple[float, ...]
    variances: tuple[float, ...]
    fractions: tuple[float, ...]
    degenerate: tuple[bool, ...] = field(default=())

    def __post_init__(self):
        means = tuple(float(m) for m in self.means)
        variances = tuple(float(v) for v in self.variances)
        fractions = tuple(float(a) for a in self.fractions)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "variances", variances)
        object.__setattr__(self, "fractions", fractions)
        n = len(means)
        if len(variances) != n or len(fractions) != n:
            raise ValueError("means, variances and fractions must have equal length")
        deg = self.degenerate or (False,) * n
        if len(deg) != n:
            raise ValueError("degenerate flags must match the region count")
        object.__setattr__(self, "degenerate", tuple(bool(d) for d in deg))

    @property
    def n_regions(self) -> int:
        return len(self.means)

    def __add__(self, other: "MacroState") -> "MacroState":
        return MacroState(
            tuple(a + b for a, b in zip(self.means, other.means)),
            tuple(a + b for a, b in zip(self.variances, other.variances)),
            tuple(a + b for a, b in zip(self.fractions, other.fractions)),
        )

    def __sub__(self, other: "MacroState") -> "MacroState":
        return MacroState(
            tuple(a - b for a, b in zip(self.means, other.means)),
            tuple(a - b for a, b in zip(self.variances, other.variances)),
            tuple(a - b for a, b in zip(self.fractions, other.fractions)),
        )

    def mixture_mean(self) -> float:
        """Fraction-weighted overall mean."""
        return float(sum(a * m for a, m in zip(self.fractions, self.means)))

    def mixture_variance(self) -> float:
        """Overall population variance of the mixture."""
        mu = self.mixture_mean()
        second = sum(a * (v + m * m) for a, v, m
                     in zip(self.fractions, self.variances, self.means))
        return float(second - mu * mu)
