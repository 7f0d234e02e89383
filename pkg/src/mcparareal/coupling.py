"""Coupling operators between particle ensembles and macro states.

``restrict`` projects an ensemble onto per-region (mean, variance, fraction);
``match`` is its right inverse: a per-region affine transform imposing target
mean and variance while preserving the empirical shape; ``lift`` matches the
t=0 initial ensemble's shape onto a macro prediction.  Matching never moves
particles between regions within one call: membership is decided by the
pre-transform positions, and any region crossing is picked up by the next
restriction.
"""

from __future__ import annotations

import logging
import math

import numpy as np

from .errors import DegenerateMatch
from .particles import ParticleEnsemble, region_statistics
from .state import MacroState, RegionPartition, SINGLE_REGION

logger = logging.getLogger("mcparareal.coupling")


def restrict(ens: ParticleEnsemble,
             partition: RegionPartition = SINGLE_REGION) -> MacroState:
    """Per-region mean, population variance and particle fraction."""
    return region_statistics(ens, partition)


def match(target: MacroState, ens: ParticleEnsemble,
          partition: RegionPartition = SINGLE_REGION,
          degenerate_policy: str = "raise") -> ParticleEnsemble:
    """Affinely transform each region's particles to the target moments.

    Per region the map is x -> sqrt(sigma_t / Sigma_c) (x - M_c) + mu_t.
    Negative target variances (possible after the additive Parareal
    correction) are clamped to zero with a warning.  A region whose current
    variance is zero cannot be scaled to a positive one; that raises
    DegenerateMatch unless ``degenerate_policy`` is "collapse", which places
    the region's particles at the target mean instead.  Empty regions are
    skipped.  Target fractions are not imposed (no resampling).
    """
    if degenerate_policy not in ("raise", "collapse"):
        raise ValueError(f"unknown degenerate policy {degenerate_policy!r}")
    if target.n_regions != partition.n_regions:
        raise ValueError(
            f"target has {target.n_regions} regions, partition has "
            f"{partition.n_regions}")

    x = ens.positions
    out = x.copy()
    idx = partition.assign(x)
    for i in range(partition.n_regions):
        mask = idx == i
        members = x[mask]
        if members.size == 0:
            logger.debug("match: region %d is empty, skipped", i)
            continue
        mu_t = target.means[i]
        var_t = target.variances[i]
        if var_t < 0.0:
            logger.warning(
                "match: clamping negative target variance %.3e in region %d",
                var_t, i)
            var_t = 0.0
        cur_mean = float(np.mean(members))
        cur_var = float(np.var(members))
        if cur_var == 0.0:
            if var_t > 0.0:
                if degenerate_policy == "raise":
                    raise DegenerateMatch(
                        f"region {i}: cannot scale a zero-variance group to "
                        f"variance {var_t:.3e}", region=i)
                logger.debug(
                    "match: collapsing degenerate region %d to mean %.6g",
                    i, mu_t)
            out[mask] = mu_t
            continue
        scale = math.sqrt(var_t / cur_var)
        if scale == 1.0 and mu_t == cur_mean:
            continue  # exact identity, keep positions bit-for-bit
        out[mask] = scale * (members - cur_mean) + mu_t
    return ParticleEnsemble(out)


def lift(target: MacroState, initial: ParticleEnsemble,
         partition: RegionPartition = SINGLE_REGION,
         degenerate_policy: str = "raise") -> ParticleEnsemble:
    """Create a micro state consistent with a macro prediction.

    The shape comes from the initial ensemble; moments come from the target.
    """
    return match(target, initial, partition, degenerate_policy)
