"""Micro-macro Parareal for scalar McKean-Vlasov SDEs.

Monte Carlo Euler-Maruyama fine propagation coupled to moment-ODE coarse
propagation through restriction (per-region moments) and matching (affine
rescaling), plus convergence-bound calculators, error metrics and a
config-driven experiment harness.
"""

from .analysis import (AffinePropagatorPair, CostModel, OUSlicePropagators,
                       linear_bound, m_power_inf_norm, ou_exact_moments,
                       ou_propagator_multipliers, ou_slice_propagators,
                       speedup, superlinear_bound)
from .config import ExperimentConfig, load_config, resolve_config
from .coupling import lift, match, restrict
from .engine import (ClassicalTrace, PararealConfig, PararealTrace,
                     run_classical, run_micro_macro, sequential_fine)
from .errors import (BoundInapplicable, ConfigError, DegenerateMatch,
                     DegenerateReference, IntegrationFailure, InvalidCostModel,
                     InvalidPartition, McPararealError, NumericalBlowup,
                     SingularityError, UnsupportedComparison)
from .metrics import (ErrorReport, FloorEstimate, floor_from_references,
                      moment_spread, relative_errors, statistical_floor,
                      wasserstein_1d)
from .models import (BurgersSpec, DoubleWellSpec, InitialDistribution,
                     LinearMcKVSpec, McKeanVlasovModel, PerturbedOUSpec,
                     PlaneRotatorSpec, StatisticKind, check_derivatives,
                     ensemble_statistic, make_burgers, make_double_well,
                     make_linear, make_perturbed_ou, make_plane_rotator,
                     mixture_statistic, point_statistic)
from .moments import (MomentODE, burgers_rhs, integrate_macro, multimodal_rhs,
                      pack_state, perturbed_ou_rhs, taylor_enriched_rhs,
                      unimodal_rhs, unpack_state)
from .particles import (NoiseMode, NoisePlan, ParticleEnsemble, StepConfig,
                        em_step, empirical_mean, empirical_variance,
                        estimate_qoi, propagate_fine, region_statistics,
                        sample_initial)
from .rk54 import IntegratorConfig, integrate, integrate_fixed
from .state import MacroState, RegionPartition, SINGLE_REGION

__version__ = "0.1.0"

__all__ = [
    "AffinePropagatorPair", "BoundInapplicable", "BurgersSpec",
    "ClassicalTrace", "ConfigError", "CostModel", "DegenerateMatch",
    "DegenerateReference", "DoubleWellSpec", "ErrorReport",
    "ExperimentConfig", "FloorEstimate", "InitialDistribution",
    "IntegrationFailure", "IntegratorConfig", "InvalidCostModel",
    "InvalidPartition", "LinearMcKVSpec", "MacroState", "McKeanVlasovModel",
    "McPararealError", "MomentODE", "NoiseMode", "NoisePlan",
    "NumericalBlowup", "OUSlicePropagators", "PararealConfig",
    "PararealTrace", "ParticleEnsemble", "PerturbedOUSpec",
    "PlaneRotatorSpec", "RegionPartition", "SINGLE_REGION",
    "SingularityError", "StatisticKind", "StepConfig",
    "UnsupportedComparison", "burgers_rhs", "check_derivatives", "em_step",
    "empirical_mean", "empirical_variance", "ensemble_statistic",
    "estimate_qoi", "floor_from_references", "integrate", "integrate_fixed",
    "integrate_macro", "lift", "linear_bound", "load_config",
    "m_power_inf_norm", "make_burgers", "make_double_well", "make_linear",
    "make_perturbed_ou", "make_plane_rotator", "match", "mixture_statistic",
    "moment_spread", "multimodal_rhs", "ou_exact_moments",
    "ou_propagator_multipliers", "ou_slice_propagators", "pack_state",
    "perturbed_ou_rhs", "point_statistic", "propagate_fine",
    "region_statistics", "relative_errors", "resolve_config", "restrict",
    "run_classical", "run_micro_macro", "sample_initial", "sequential_fine",
    "speedup", "statistical_floor", "superlinear_bound",
    "taylor_enriched_rhs", "unimodal_rhs", "unpack_state", "wasserstein_1d",
]
