"""Monte Carlo particle representation and Euler-Maruyama fine propagation.

Noise is addressed, not streamed: every (slice, step) pair keys its own
counter-based generator, so increments are independent of how slices are
scheduled across workers and can be replayed identically.  In FROZEN mode the
address ignores the Parareal iteration (the same Brownian increments drive
every iteration); FRESH mode keys the iteration in as well.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import NumericalBlowup
from .models import McKeanVlasovModel, ensemble_statistic
from .state import MacroState, RegionPartition

# entropy-domain tags keeping the initial-condition, step-noise and derived
# streams disjoint
_DOMAIN_INIT = 0
_DOMAIN_STEP_FROZEN = 1
_DOMAIN_STEP_FRESH = 2
_DOMAIN_DERIVED = 3


class NoiseMode(enum.Enum):
    FROZEN = "frozen"
    FRESH = "fresh"


@dataclass(frozen=True)
class NoisePlan:
    """Deterministic Brownian-increment supply keyed by (slice, step[, iteration])."""

    master_seed: int
    mode: NoiseMode = NoiseMode.FROZEN

    def __post_init__(self):
        if not (0 <= int(self.master_seed) < 2 ** 64):
            raise ValueError("master_seed must fit in an unsigned 64-bit integer")
        object.__setattr__(self, "master_seed", int(self.master_seed))
        if isinstance(self.mode, str):
            object.__setattr__(self, "mode", NoiseMode(self.mode))

    def _generator(self, entropy: tuple[int, ...]) -> np.random.Generator:
        return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))

    def normals(self, slice_index: int, step_index: int, count: int,
                iteration: int = 0) -> np.ndarray:
        """Standard normal increments for one Euler-Maruyama step."""
        if self.mode is NoiseMode.FROZEN:
            entropy = (self.master_seed, _DOMAIN_STEP_FROZEN,
                       int(slice_index), int(step_index))
        else:
            entropy = (self.master_seed, _DOMAIN_STEP_FRESH,
                       int(slice_index), int(step_index), int(iteration))
        return self._generator(entropy).standard_normal(count)

    def init_rng(self) -> np.random.Generator:
        """Generator reserved for sampling the initial ensemble."""
        return self._generator((self.master_seed, _DOMAIN_INIT))

    def derived_seed(self, index: int) -> int:
        """Independent 64-bit seed, e.g. one per experiment replicate."""
        ss = np.random.SeedSequence((self.master_seed, _DOMAIN_DERIVED, int(index)))
        return int(ss.generate_state(2, dtype=np.uint32)[0]) \
            + (int(ss.generate_state(2, dtype=np.uint32)[1]) << 32)


@dataclass(frozen=True)
class StepConfig:
    """Euler-Maruyama step size and per-slice step count."""

    dt: float
    steps_per_slice: int

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.steps_per_slice < 1:
            raise ValueError("steps_per_slice must be at least 1")

    @property
    def slice_length(self) -> float:
        return self.dt * self.steps_per_slice


class ParticleEnsemble:
    """Immutable snapshot of P particle positions."""

    __slots__ = ("_positions",)

    def __init__(self, positions):
        x = np.array(positions, dtype=float, copy=True).reshape(-1)
        if x.size < 1:
            raise ValueError("an ensemble needs at least one particle")
        x.flags.writeable = False
        self._positions = x

    @property
    def positions(self) -> np.ndarray:
        return self._positions

    @property
    def size(self) -> int:
        return self._positions.size

    def __len__(self) -> int:
        return self._positions.size

    def __repr__(self) -> str:
        return f"ParticleEnsemble(P={self.size})"


def _em_step_raw(model: McKeanVlasovModel, x: np.ndarray, t: float, dt: float,
                 noise: np.ndarray) -> np.ndarray:
    """One vectorized Euler-Maruyama step on raw positions.

    The interaction statistic is computed once from the pre-step positions and
    shared by every particle's drift and diffusion evaluation.
    """
    s = ensemble_statistic(model, x)
    x_new = x + model.drift(x, s, t) * dt \
        + model.diffusion(x, s, t) * math.sqrt(dt) * noise
    if model.post_step is not None:
        x_new = model.post_step(x_new)
    return x_new


def em_step(model: McKeanVlasovModel, ens: ParticleEnsemble, t: float,
            dt: float, noise) -> ParticleEnsemble:
    """Single Euler-Maruyama step of a whole ensemble."""
    noise = np.asarray(noise, dtype=float)
    if noise.shape != ens.positions.shape:
        raise ValueError("noise must supply one increment per particle")
    x_new = _em_step_raw(model, ens.positions, t, float(dt), noise)
    if not np.all(np.isfinite(x_new)):
        raise NumericalBlowup("non-finite particle position after step")
    return ParticleEnsemble(x_new)


def propagate_fine(model: McKeanVlasovModel, ens: ParticleEnsemble,
                   slice_index: int, t0: float, cfg: StepConfig,
                   plan: NoisePlan, iteration: int = 0) -> ParticleEnsemble:
    """Euler-Maruyama propagation of one ensemble across one time slice."""
    x = ens.positions.copy()
    count = x.size
    for j in range(cfg.steps_per_slice):
        noise = plan.normals(slice_index, j, count, iteration)
        x = _em_step_raw(model, x, t0 + j * cfg.dt, cfg.dt, noise)
        if not np.all(np.isfinite(x)):
            raise NumericalBlowup(
                f"non-finite particle position in slice {slice_index}, "
                f"step {j}", slice_index=slice_index, step_index=j)
    return ParticleEnsemble(x)


def empirical_mean(ens: ParticleEnsemble) -> float:
    return float(np.mean(ens.positions))


def empirical_variance(ens: ParticleEnsemble) -> float:
    """Population variance (1/P normalization)."""
    return float(np.var(ens.positions))


def estimate_qoi(ens: ParticleEnsemble, phi) -> float:
    """Monte Carlo estimate of E[phi(X)] over the ensemble."""
    return float(np.mean(phi(ens.positions)))


def region_statistics(ens: ParticleEnsemble,
                      partition: RegionPartition) -> MacroState:
    """Per-region mean, population variance and fraction.

    Regions holding fewer than two particles cannot support a variance; they
    are flagged degenerate, report variance 0, and an empty region reports
    the partition's center for that region as its mean.
    """
    x = ens.positions
    idx = partition.assign(x)
    n = partition.n_regions
    means, variances, fractions, degenerate = [], [], [], []
    for i in range(n):
        members = x[idx == i]
        count = members.size
        fractions.append(count / x.size)
        if count == 0:
            means.append(partition.center(i))
            variances.append(0.0)
            degenerate.append(True)
        elif count == 1:
            means.append(float(members[0]))
            variances.append(0.0)
            degenerate.append(True)
        else:
            means.append(float(np.mean(members)))
            variances.append(float(np.var(members)))
            degenerate.append(False)
    return MacroState(tuple(means), tuple(variances), tuple(fractions),
                      tuple(degenerate))


def sample_initial(dist, plan: NoisePlan, count: int) -> ParticleEnsemble:
    """Draw the initial ensemble from the plan's dedicated stream."""
    return ParticleEnsemble(dist.sample(plan.init_rng(), count))
