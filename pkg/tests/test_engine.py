"""Parareal engine tests: exactness, recursion oracle, scheduling invariance."""

import math

import numpy as np
import pytest

from mcparareal import (AffinePropagatorPair, DoubleWellSpec,
                        InitialDistribution, IntegratorConfig, NoisePlan,
                        PararealConfig, PerturbedOUSpec, StepConfig,
                        integrate_macro, make_double_well, make_perturbed_ou,
                        multimodal_rhs, perturbed_ou_rhs, restrict,
                        run_classical, run_micro_macro, sequential_fine,
                        unimodal_rhs)
from mcparareal.errors import ConfigError
from mcparareal.particles import sample_initial


def ou_setup(particles=500, n_slices=4, iterations=4, workers=1,
             stop_tol=None, seed=77):
    spec = PerturbedOUSpec(B=1.0)
    model = make_perturbed_ou(spec)
    coarse = perturbed_ou_rhs(spec)
    cfg = PararealConfig(
        n_slices=n_slices, iterations=iterations, slice_length=0.25,
        particles=particles, step=StepConfig(dt=0.05, steps_per_slice=5),
        workers=workers, stop_wasserstein_tol=stop_tol)
    plan = NoisePlan(seed)
    initial = InitialDistribution.normal(1.0, 0.5)
    return model, coarse, initial, cfg, plan


# ---------------------------------------------------------------------------
# classical Parareal
# ---------------------------------------------------------------------------

def test_classical_identical_propagators_converge_at_k1():
    f = AffinePropagatorPair(0.6, 0.1)
    trace = run_classical(1.0, f, f, n_slices=8, iterations=8)
    assert trace.errors[0] > 0 or trace.errors[0] == 0.0
    np.testing.assert_allclose(trace.errors[1:], 0.0, atol=1e-14)


def test_classical_is_exact_at_k_equals_n():
    coarse = AffinePropagatorPair(0.5, 0.2)
    fine = AffinePropagatorPair(0.8, -0.1)
    trace = run_classical(2.0, coarse, fine, n_slices=6, iterations=6)
    assert trace.errors[0] > 1e-3
    assert trace.errors[6] <= 1e-12 * max(1.0, np.max(np.abs(trace.fine)))
    # iterate k is already exact on the first k slice boundaries
    for k in range(7):
        np.testing.assert_allclose(trace.iterates[k, :k + 1],
                                   trace.fine[:k + 1], atol=1e-12)


def test_classical_matches_matrix_error_recursion():
    # e^{k+1} = (I - G S)^{-1} (F - G) S e^k with S the subdiagonal shift
    g_mult, f_mult, u0, n = 0.5, 0.6, 1.0, 3
    coarse = AffinePropagatorPair(g_mult, 0.3)
    fine = AffinePropagatorPair(f_mult, 0.1)
    trace = run_classical(u0, coarse, fine, n_slices=n, iterations=n)

    shift = np.diag(np.ones(n), -1)
    lhs = np.eye(n + 1) - g_mult * shift
    rhs = (f_mult - g_mult) * shift
    err = trace.iterates[0] - trace.fine
    for k in range(1, n + 1):
        err = np.linalg.solve(lhs, rhs @ err)
        observed = trace.iterates[k] - trace.fine
        np.testing.assert_allclose(observed, err, atol=1e-13)


def test_classical_validates_counts():
    f = AffinePropagatorPair(0.5)
    with pytest.raises(ConfigError):
        run_classical(1.0, f, f, n_slices=0, iterations=0)
    with pytest.raises(ConfigError):
        run_classical(1.0, f, f, n_slices=3, iterations=4)


# ---------------------------------------------------------------------------
# micro-macro iteration
# ---------------------------------------------------------------------------

def test_iteration_zero_is_the_pure_coarse_cascade():
    model, coarse, initial, cfg, plan = ou_setup(iterations=0)
    trace = run_micro_macro(model, coarse, initial, cfg, plan)
    assert trace.iterations == 0
    state = trace.macro[0][0]
    for n in range(cfg.n_slices):
        state = integrate_macro(coarse, state, trace.times[n],
                                trace.times[n + 1], cfg.integrator)
        assert trace.macro[0][n + 1].means[0] == pytest.approx(
            state.means[0], rel=1e-12)
        assert trace.macro[0][n + 1].variances[0] == pytest.approx(
            state.variances[0], rel=1e-12)


def test_exactness_for_k_at_least_n_is_bitwise():
    model, coarse, initial, cfg, plan = ou_setup()
    trace = run_micro_macro(model, coarse, initial, cfg, plan)
    reference = sequential_fine(model, initial, cfg, plan)
    for k in range(1, cfg.iterations + 1):
        for n in range(0, k + 1):
            assert np.array_equal(trace.snapshots[k][n].positions,
                                  reference[n].positions), (k, n)


def test_iterates_converge_toward_the_fine_solution():
    model, coarse, initial, cfg, plan = ou_setup(particles=2000)
    trace = run_micro_macro(model, coarse, initial, cfg, plan)
    reference = sequential_fine(model, initial, cfg, plan)
    final = cfg.n_slices

    def gap(k):
        return abs(float(np.mean(trace.snapshots[k][final].positions))
                   - float(np.mean(reference[final].positions)))

    assert gap(cfg.iterations) == 0.0
    assert gap(cfg.iterations) <= gap(0)


def test_macro_micro_consistency_single_region():
    model, coarse, initial, cfg, plan = ou_setup()
    trace = run_micro_macro(model, coarse, initial, cfg, plan)
    for k in range(trace.iterations + 1):
        for n in range(cfg.n_slices + 1):
            macro, micro = trace.macro[k][n], trace.micro_stats[k][n]
            assert micro.fractions == (1.0,)
            assert macro.fractions == (1.0,)
            scale = max(1.0, abs(macro.means[0]))
            assert abs(macro.means[0] - micro.means[0]) < 1e-9 * scale
            assert abs(macro.variances[0] - micro.variances[0]) \
                < 1e-9 * max(1.0, macro.variances[0])


def test_scheduling_invariance_across_worker_counts():
    results = []
    for workers in (1, 4):
        model, coarse, initial, cfg, plan = ou_setup(workers=workers,
                                                     iterations=3)
        results.append(run_micro_macro(model, coarse, initial, cfg, plan))
    serial, threaded = results
    for k in range(serial.iterations + 1):
        for n in range(serial.n_slices + 1):
            assert np.array_equal(serial.snapshots[k][n].positions,
                                  threaded.snapshots[k][n].positions)


def test_initial_ensemble_can_replace_the_distribution():
    model, coarse, initial, cfg, plan = ou_setup(iterations=1)
    ens0 = sample_initial(initial, plan, cfg.particles)
    from_dist = run_micro_macro(model, coarse, initial, cfg, plan)
    from_ens = run_micro_macro(model, coarse, ens0, cfg, plan)
    assert np.array_equal(from_dist.snapshots[1][1].positions,
                          from_ens.snapshots[1][1].positions)
    bad = sample_initial(initial, plan, cfg.particles + 1)
    with pytest.raises(ConfigError):
        run_micro_macro(model, coarse, bad, cfg, plan)


def test_snapshot_retention_can_be_disabled():
    model, coarse, initial, cfg, plan = ou_setup(iterations=2)
    cfg = PararealConfig(
        n_slices=cfg.n_slices, iterations=2, slice_length=cfg.slice_length,
        particles=cfg.particles, step=cfg.step, retain_snapshots=False)
    trace = run_micro_macro(model, coarse, initial, cfg, plan)
    assert trace.snapshots is None
    assert len(trace.macro) == 3
    assert len(trace.micro_stats) == 3


def test_stopping_criterion_is_off_by_default_and_triggers_when_set():
    model, coarse, initial, cfg, plan = ou_setup()
    trace = run_micro_macro(model, coarse, initial, cfg, plan)
    assert trace.stopped_at is None
    assert trace.iterations == cfg.iterations

    model, coarse, initial, cfg, plan = ou_setup(stop_tol=1e6)
    trace = run_micro_macro(model, coarse, initial, cfg, plan)
    assert trace.stopped_at == 1
    assert trace.iterations == 1


def test_timings_cover_all_stages():
    model, coarse, initial, cfg, plan = ou_setup(iterations=2)
    trace = run_micro_macro(model, coarse, initial, cfg, plan)
    assert set(trace.timings) == {"coarse", "fine", "restrict", "match"}
    assert all(v >= 0.0 for vals in trace.timings.values() for v in vals)
    # one fine sweep per iteration, one propagation per slice
    assert len(trace.timings["fine"]) == 2 * cfg.n_slices


def test_parareal_config_validation():
    step = StepConfig(dt=0.05, steps_per_slice=5)
    with pytest.raises(ConfigError):
        PararealConfig(n_slices=0, iterations=0, slice_length=0.25,
                       particles=10, step=step)
    with pytest.raises(ConfigError):
        PararealConfig(n_slices=4, iterations=5, slice_length=0.25,
                       particles=10, step=step)
    with pytest.raises(ConfigError):
        PararealConfig(n_slices=4, iterations=2, slice_length=0.3,
                       particles=10, step=step)  # dt * steps != slice
    with pytest.raises(ConfigError):
        PararealConfig(n_slices=4, iterations=2, slice_length=0.25,
                       particles=0, step=step)
    cfg = PararealConfig(n_slices=4, iterations=2, slice_length=0.25,
                         particles=10, step=step)
    assert cfg.horizon == pytest.approx(1.0)


def test_region_count_mismatch_is_rejected():
    model, _, initial, cfg, plan = ou_setup()
    spec = DoubleWellSpec()
    two_region = multimodal_rhs(make_double_well(spec),
                                spec.default_partition(), spec.potential,
                                spec.sigma)
    with pytest.raises(ConfigError):
        run_micro_macro(model, two_region, initial, cfg, plan)


# ---------------------------------------------------------------------------
# multimodal runs: diagnostics
# ---------------------------------------------------------------------------

def double_well_run(iterations=3, n_slices=5, particles=400, seed=11):
    spec = DoubleWellSpec()
    model = make_double_well(spec)
    partition = spec.default_partition()
    coarse = multimodal_rhs(model, partition, spec.potential, spec.sigma)
    cfg = PararealConfig(
        n_slices=n_slices, iterations=iterations, slice_length=0.1,
        particles=particles, step=StepConfig(dt=0.005, steps_per_slice=20),
        partition=partition)
    plan = NoisePlan(seed)
    initial = InitialDistribution.normal(1.2, 0.8)
    return run_micro_macro(model, coarse, initial, cfg, plan), cfg


def test_fraction_gaps_are_logged_for_every_slice():
    trace, cfg = double_well_run()
    gaps = {(k, n) for k, n, _ in trace.fraction_gaps}
    expected = {(k, n) for k in range(trace.iterations + 1)
                for n in range(1, cfg.n_slices + 1)}
    assert gaps == expected
    assert all(g >= 0.0 for _, _, g in trace.fraction_gaps)


def test_macro_fractions_track_the_fine_restriction():
    # the corrected macro state keeps the fine-restriction fractions; they
    # always sum to one and stay in [0, 1], unlike the additive proposal
    trace, cfg = double_well_run()
    for k in range(1, trace.iterations + 1):
        for n in range(cfg.n_slices + 1):
            fr = trace.macro[k][n].fractions
            assert sum(fr) == pytest.approx(1.0, abs=1e-12)
            assert all(0.0 <= f <= 1.0 for f in fr)


def test_clamped_macro_variances_are_never_negative():
    trace, _ = double_well_run()
    for row in trace.macro:
        for state in row:
            assert min(state.variances) >= 0.0
    for k, n, i, value in trace.clamp_events:
        assert value < 0.0
        assert 1 <= k <= trace.iterations


def test_multimodal_exactness_still_holds():
    trace, cfg = double_well_run(iterations=5)
    spec = DoubleWellSpec()
    model = make_double_well(spec)
    plan = NoisePlan(11)
    reference = sequential_fine(model, InitialDistribution.normal(1.2, 0.8),
                                cfg, plan)
    k = cfg.n_slices
    for n in range(cfg.n_slices + 1):
        assert np.array_equal(trace.snapshots[k][n].positions,
                              reference[n].positions), n


def test_sequential_fine_has_one_state_per_boundary():
    model, _, initial, cfg, plan = ou_setup()
    path = sequential_fine(model, initial, cfg, plan)
    assert len(path) == cfg.n_slices + 1
    assert all(p.size == cfg.particles for p in path)
    # restriction of the path start matches the sampled initial condition
    ens0 = sample_initial(initial, plan, cfg.particles)
    assert np.array_equal(path[0].positions, ens0.positions)
    assert restrict(path[0]).means[0] == pytest.approx(1.0, abs=0.1)
