"""Wasserstein distance, relative iterate errors and statistical floor."""

import itertools
import math
from types import SimpleNamespace

import numpy as np
import pytest

from mcparareal import (ParticleEnsemble, floor_from_references,
                        moment_spread, relative_errors, statistical_floor,
                        wasserstein_1d)
from mcparareal.errors import DegenerateReference, UnsupportedComparison


def brute_force_w1(a, b) -> float:
    """Minimum-cost perfect matching over all assignments (P small)."""
    a = np.asarray(a, dtype=float)
    best = math.inf
    for perm in itertools.permutations(range(len(b))):
        cost = float(np.mean(np.abs(a - np.asarray(b)[list(perm)])))
        best = min(best, cost)
    return best


# ---------------------------------------------------------------------------
# Wasserstein distance
# ---------------------------------------------------------------------------

def test_wasserstein_matches_brute_force_assignment():
    rng = np.random.default_rng(17)
    for _ in range(100):
        p = rng.integers(1, 7)
        a = rng.normal(0.0, 2.0, p)
        b = rng.normal(1.0, 0.5, p)
        assert wasserstein_1d(a, b) == pytest.approx(brute_force_w1(a, b),
                                                     abs=1e-12)


def test_wasserstein_translation_and_axioms():
    rng = np.random.default_rng(5)
    a = rng.normal(0.0, 1.0, 50)
    assert wasserstein_1d(a, a + 3.0) == pytest.approx(3.0, abs=1e-12)
    assert wasserstein_1d(a, a) == 0.0
    b = rng.normal(1.0, 2.0, 50)
    c = rng.normal(-1.0, 0.5, 50)
    assert wasserstein_1d(a, b) == pytest.approx(wasserstein_1d(b, a))
    assert wasserstein_1d(a, c) <= wasserstein_1d(a, b) \
        + wasserstein_1d(b, c) + 1e-12


def test_wasserstein_is_permutation_invariant():
    rng = np.random.default_rng(6)
    a = rng.normal(0.0, 1.0, 30)
    b = rng.normal(0.5, 1.5, 30)
    shuffled = b.copy()
    rng.shuffle(shuffled)
    assert wasserstein_1d(a, b) == wasserstein_1d(a, shuffled)
    # accepts ensembles and arrays interchangeably
    assert wasserstein_1d(ParticleEnsemble(a), b) == wasserstein_1d(a, b)


def test_wasserstein_size_mismatch_raises():
    with pytest.raises(UnsupportedComparison):
        wasserstein_1d(np.zeros(3), np.zeros(4))
    with pytest.raises(UnsupportedComparison):
        wasserstein_1d(np.zeros(0), np.zeros(0))


# ---------------------------------------------------------------------------
# relative iterate errors
# ---------------------------------------------------------------------------

def fake_trace(snapshots):
    """Trace stand-in: snapshots[k][n] with n = 0 the initial condition."""
    return SimpleNamespace(snapshots=[[ParticleEnsemble(e) for e in row]
                                      for row in snapshots],
                           iterations=len(snapshots) - 1,
                           n_slices=len(snapshots[0]) - 1)


def test_relative_errors_single_slice_frozen_example():
    init = [0.0, 0.0]
    trace = fake_trace([
        [init, [2.0, 4.0]],   # k = 0: mean 3, var 1
        [init, [1.0, 3.0]],   # k = 1 (reference): mean 2, var 1
    ])
    rep = relative_errors(trace, 0)
    assert rep.e_mean == pytest.approx(0.5)
    assert rep.e_var == pytest.approx(0.0, abs=1e-15)
    # W1 = 1 against reference mean norm 2
    assert rep.e_wass == pytest.approx(0.5)
    assert rep.reference_iteration == 1
    assert rep.normalized_mean == pytest.approx(1.0)
    assert rep.wass_per_slice == (1.0,)


def test_relative_errors_vanish_at_the_reference_iterate():
    rng = np.random.default_rng(8)
    rows = [[rng.normal(0.0, 1.0, 20) for _ in range(4)] for _ in range(3)]
    trace = fake_trace(rows)
    rep = relative_errors(trace, 2)
    assert rep.e_mean == 0.0 and rep.e_var == 0.0 and rep.e_wass == 0.0


def test_relative_errors_are_invariant_under_slice_duplication():
    # repeating the same per-slice content leaves the relative errors fixed
    # while the raw norms grow by sqrt(N): the carried normalized values
    # divide that growth back out
    init = [0.0, 0.0]
    cur, ref = [2.0, 4.0], [1.0, 3.0]
    one = relative_errors(fake_trace([[init, cur], [init, ref]]), 0)
    four = relative_errors(fake_trace([[init] + [cur] * 4,
                                       [init] + [ref] * 4]), 0)
    assert four.e_mean == pytest.approx(one.e_mean)
    assert four.e_wass == pytest.approx(one.e_wass)
    assert four.normalized_mean == pytest.approx(one.normalized_mean)
    assert four.n_slices == 4


def test_relative_errors_var_denominator_variants():
    init = [0.0, 0.0]
    trace = fake_trace([
        [init, [0.0, 6.0]],   # var 9
        [init, [1.0, 3.0]],   # reference: mean 2, var 1
    ])
    by_var = relative_errors(trace, 0, var_denominator="variance")
    by_mean = relative_errors(trace, 0, var_denominator="mean")
    assert by_var.e_var == pytest.approx(8.0)    # |9 - 1| / 1
    assert by_mean.e_var == pytest.approx(4.0)   # |9 - 1| / 2
    with pytest.raises(ValueError):
        relative_errors(trace, 0, var_denominator="typo")


def test_relative_errors_validation():
    init = [0.0, 1.0]
    trace = fake_trace([[init, [0.0, 0.0]], [init, [0.0, 0.0]]])
    with pytest.raises(DegenerateReference):
        relative_errors(trace, 0)  # zero-norm reference means
    trace = fake_trace([[init, [1.0, 1.0]], [init, [1.0, 1.0]]])
    with pytest.raises(DegenerateReference):
        relative_errors(trace, 0)  # zero-norm reference variances
    good = fake_trace([[init, [1.0, 3.0]], [init, [1.0, 3.0]]])
    with pytest.raises(ValueError):
        relative_errors(good, 5)
    no_snaps = SimpleNamespace(snapshots=None, iterations=1, n_slices=1)
    with pytest.raises(ValueError):
        relative_errors(no_snaps, 0)


def test_relative_errors_explicit_reference_iteration():
    init = [0.0, 0.0]
    trace = fake_trace([
        [init, [2.0, 4.0]],
        [init, [1.0, 3.0]],
    ])
    rep = relative_errors(trace, 1, reference_k=0)
    assert rep.e_mean == pytest.approx(1.0 / 3.0)
    assert rep.reference_iteration == 0


# ---------------------------------------------------------------------------
# statistical floor
# ---------------------------------------------------------------------------

def test_floor_of_identical_replicas_is_zero():
    a = np.arange(10.0)
    assert statistical_floor([a, a.copy(), a.copy()]) == 0.0
    with pytest.raises(ValueError):
        statistical_floor([a])


def test_floor_shrinks_like_one_over_sqrt_p():
    rng = np.random.default_rng(23)

    def floor_at(p):
        replicas = [rng.normal(0.0, 1.0, p) for _ in range(8)]
        return statistical_floor(replicas)

    small, large = floor_at(500), floor_at(500 * 16)
    assert small / large == pytest.approx(4.0, rel=0.25)


def test_floor_scales_with_the_distribution_width():
    rng = np.random.default_rng(29)
    base = [rng.normal(0.0, 1.0, 2000) for _ in range(8)]
    wide = [2.0 * r for r in base]
    ratio = statistical_floor(wide) / statistical_floor(base)
    assert ratio == pytest.approx(2.0, rel=1e-9)


def test_moment_spread_frozen_example():
    mean_spread, var_spread = moment_spread([[0.0, 2.0], [1.0, 3.0]])
    assert mean_spread == 1.0
    assert var_spread == 0.0
    with pytest.raises(ValueError):
        moment_spread([[0.0, 1.0]])


def test_floor_from_references_matches_manual_pairwise_norms():
    rng = np.random.default_rng(31)
    n_slices, p = 3, 400
    paths = [[rng.normal(1.0, 0.5, p) for _ in range(n_slices + 1)]
             for _ in range(3)]
    floor = floor_from_references(paths)
    assert floor.n_replicas == 3
    assert floor.e_mean > 0 and floor.e_var > 0 and floor.e_wass > 0
    # manual recomputation of the Wasserstein numerator for one pair
    w = np.array([wasserstein_1d(paths[0][n], paths[1][n])
                  for n in range(1, n_slices + 1)])
    pair_norm = float(np.sqrt(np.sum(w ** 2)))
    means = np.array([[np.mean(paths[i][n]) for n in range(1, n_slices + 1)]
                      for i in range(3)])
    denom = float(np.mean([np.sqrt(np.sum(m ** 2)) for m in means]))
    # three replicas -> three pairs; each pair contributes equally
    assert floor.e_wass * 3 * denom >= pair_norm


def test_floor_from_references_validation():
    rng = np.random.default_rng(37)
    good = [[rng.normal(0.0, 1.0, 10) for _ in range(3)] for _ in range(2)]
    floor_from_references(good)
    with pytest.raises(ValueError):
        floor_from_references(good[:1])
    bad = [good[0], good[1][:2]]
    with pytest.raises(ValueError):
        floor_from_references(bad)
    zero = [[np.zeros(10) for _ in range(3)] for _ in range(2)]
    with pytest.raises(DegenerateReference):
        floor_from_references(zero)
