import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mfcommunity.estimator import (
    DegenerateInputError,
    empirical_covariances,
    failed_score,
    kmeans2,
    recover,
    score,
    separation_stats,
    sigma_hat,
    sigma_hat_double_sum,
    sigma_hat_exact,
    sigma_hat_from_counts,
)
from mfcommunity.model import CommunityLayout, build_layout, sample_environment, validate_params
from mfcommunity.oracle import compute_oracle
from mfcommunity.simulator import LagCounts, SimConfig, Trajectory, lag_counts, simulate

binary_trajectories = st.integers(1, 6).flatmap(
    lambda n: st.lists(st.lists(st.integers(0, 1), min_size=n, max_size=n), min_size=2, max_size=8)
)


def layout(labels):
    labels = np.asarray(labels, dtype=np.int8)
    assert np.all(labels[: (labels == 1).sum()] == 1)
    return CommunityLayout(int((labels == 1).sum()), labels)


def sse(values, high):
    v = np.asarray(values)
    return sum(float(((v[m] - v[m].mean()) ** 2).sum()) for m in (high, ~high) if m.any())


# -- sigma_hat ---------------------------------------------------------------------


@pytest.mark.parametrize("fill", [0, 1])
def test_constant_trajectories_give_zero(fill):
    traj = Trajectory.from_states(np.full((7, 5), fill, dtype=np.uint8))
    assert np.all(sigma_hat(traj) == 0.0)


def test_two_sample_example():
    # X_1 = (1, 0), X_2 = (0, 1): only X_{2,2} X_{1,1} = 1 in the lag sum
    traj = Trajectory.from_states([[1, 0], [0, 1]])
    # sigma_j = lag_j / 1 - (sum Z) Z_j / 4 with Z = (1, 1)
    assert sigma_hat(traj).tolist() == [1 - 0.5, 0 - 0.5]
    assert sigma_hat_double_sum(traj.states) == [Fraction(1, 2), Fraction(-1, 2)]


@settings(max_examples=300, deadline=None)
@given(binary_trajectories)
def test_aggregated_form_equals_double_sum(rows):
    traj = Trajectory.from_states(rows)
    ref = sigma_hat_double_sum(traj.states)
    assert sigma_hat_exact(lag_counts(traj)) == ref
    fast = sigma_hat(traj)
    assert all(abs(a - float(b)) <= 4 * np.finfo(float).eps * max(1.0, abs(float(b))) for a, b in zip(fast, ref))


def test_rational_fallback_for_huge_counts():
    t = 2**27
    n = 4
    stats = LagCounts(np.full(n, t, dtype=np.int64), np.full(n, n * (t - 1), dtype=np.int64), t)
    # all-ones trajectory of length 2^27 over 4 components: total * T = 2^56
    assert np.all(sigma_hat_from_counts(stats) == 0.0)


def test_too_short():
    with pytest.raises(ValueError):
        sigma_hat(Trajectory.from_states([[0, 1, 1]]))


def test_estimator_approaches_exact_column_sums():
    prm = validate_params(6, 0.5, 0.5, 0.5, 0.5)
    env = sample_environment(prm, build_layout(prm), 3)
    exact = compute_oracle(env).sigma_vec
    errs = []
    for t in (2_000, 200_000):
        est = sigma_hat(simulate(env, SimConfig(t, seed=1)))
        errs.append(np.max(np.abs(est - exact)))
    assert errs[1] < errs[0]
    assert errs[1] < 0.02


def test_empirical_covariances_shapes_and_symmetry():
    prm = validate_params(5, 0.4, 0.5, 0.5, 0.6)
    traj = simulate(sample_environment(prm, build_layout(prm), 0), SimConfig(500, seed=0))
    lag0, lag1 = empirical_covariances(traj)
    assert lag0.shape == lag1.shape == (5, 5)
    np.testing.assert_allclose(lag0, lag0.T)
    # column sums of lag1 use the (T-1) normalisation with full-sample means
    assert np.all(np.diag(lag0) >= 0)


# -- kmeans2 -----------------------------------------------------------------------------


def test_kmeans_example():
    (lo, hi), labels, _ = kmeans2([1.0, 0.9, -1.0])
    assert (lo, hi) == (-1.0, pytest.approx(0.95))
    assert labels.tolist() == [1, 1, -1]


def test_kmeans_singleton_max_is_plus():
    _, labels, _ = kmeans2([0.0, 0.1, 0.05, 5.0])
    assert labels.tolist() == [-1, -1, -1, 1]


def test_kmeans_planted_split_first_iteration():
    v = [0.9, 1.0, 1.1, -1.1, -1.0, -0.9]
    (lo, hi), labels, it = kmeans2(v)
    assert it == 1
    assert labels.tolist() == [1, 1, 1, -1, -1, -1]
    assert (lo, hi) == (pytest.approx(-1.0), pytest.approx(1.0))


def test_kmeans_tie_goes_low():
    # 0 is equidistant from -1 and 1 at the first assignment, and stays so
    _, labels, _ = kmeans2([-1.0, 0.0, 1.0])
    assert labels.tolist() == [-1, -1, 1]


@pytest.mark.parametrize("values", [[2.0, 2.0, 2.0], [0.0, 0.0]])
def test_kmeans_degenerate(values):
    with pytest.raises(DegenerateInputError):
        kmeans2(values)


def test_kmeans_needs_two_values():
    with pytest.raises(ValueError):
        kmeans2([1.0])


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-10, 10, allow_nan=False), min_size=2, max_size=12, unique=True), st.randoms())
def test_kmeans_permutation_invariant(values, rnd):
    perm = list(range(len(values)))
    rnd.shuffle(perm)
    c1, l1, _ = kmeans2(values)
    c2, l2, _ = kmeans2([values[i] for i in perm])
    assert c1 == c2
    assert [l1[i] for i in perm] == l2.tolist()


def best_threshold_split(v):
    """Exhaustive search over all N - 1 threshold splits of the sorted values."""
    order = np.sort(v)
    splits = [v > c for c in order[:-1]]
    return min(splits, key=lambda s: sse(v, s))


@settings(max_examples=300, deadline=None)
@given(st.lists(st.floats(-10, 10, allow_nan=False, allow_subnormal=False), min_size=2, max_size=12, unique=True))
def test_kmeans_result_is_best_threshold_split(values):
    v = np.array(values)
    _, labels, _ = kmeans2(v)
    high = labels == 1
    assert high.any() and not high.all()
    # every +1 value exceeds every -1 value
    assert v[high].min() > v[~high].max()
    best = best_threshold_split(v)
    assert sse(v, high) <= sse(v, best) * (1 + 1e-9) + 1e-12


def test_kmeans_escapes_local_optimum():
    # plain Lloyd from (min, max) stops at {0, 1, 4} | {8} (SSE 26/3);
    # {0, 1} | {4, 8} has SSE 17/2
    v = np.array([0.0, 1, 4, 8])
    (lo, hi), labels, _ = kmeans2(v)
    assert labels.tolist() == [-1, -1, 1, 1]
    assert (lo, hi) == (0.5, 6.0)


def test_kmeans_result_is_lloyd_stable():
    rng = np.random.default_rng(4)
    for _ in range(200):
        v = rng.standard_normal(int(rng.integers(2, 13)))
        (lo, hi), labels, _ = kmeans2(v)
        assert np.array_equal(np.abs(v - hi) < np.abs(v - lo), labels == 1)


def test_kmeans_well_separated_is_optimal():
    rng = np.random.default_rng(0)
    for _ in range(100):
        n = int(rng.integers(2, 13))
        k = int(rng.integers(1, n))
        v = np.concatenate([rng.normal(5, 0.5, k), rng.normal(-5, 0.5, n - k)])
        _, labels, _ = kmeans2(v)
        high = labels == 1
        best = min(
            (sse(v, np.array(mask)) for mask in itertools.product([False, True], repeat=n) if 0 < sum(mask) < n),
        )
        assert sse(v, high) == pytest.approx(best)


def test_recover_returns_inputs():
    res = recover([0.3, -0.2, 0.25])
    assert res.labels_hat.tolist() == [1, -1, 1]
    assert res.kmeans_iters >= 1
    assert res.sigma_hat.tolist() == [0.3, -0.2, 0.25]


# -- scoring -------------------------------------------------------------------------------


def test_score_exact():
    lay = layout([1] * 3 + [-1] * 2)
    s = score([1, 1, 1, -1, -1], lay)
    assert s.exact and s.misclassified_fraction == 0.0


def test_score_one_wrong_of_fifty():
    lay = layout([1] * 25 + [-1] * 25)
    guess = lay.labels.copy()
    guess[3] = -1
    s = score(guess, lay)
    assert not s.exact and s.misclassified_fraction == 0.02


def test_score_all_flipped():
    lay = layout([1] * 4 + [-1] * 4)
    assert score(-lay.labels, lay).misclassified_fraction == 1.0


def test_score_length_check():
    with pytest.raises(ValueError):
        score([1, -1], layout([1, -1, -1]))


def test_failed_score():
    s = failed_score(layout([1] * 7 + [-1] * 3))
    assert not s.exact and s.misclassified_fraction == 0.3


def test_separation_examples():
    lay = layout([1, 1, -1, -1])
    assert separation_stats([1, 1, -1, -1], lay) == (0.0, 2.0)
    assert separation_stats([0, 0, 0, 0], lay) == (0.0, 0.0)
    assert separation_stats([3, 1, 0.5, -2], lay) == (2.5, 0.5)


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 9).flatmap(lambda k: st.tuples(
    st.just(k), st.lists(st.floats(-5, 5, allow_nan=False), min_size=k + 1, max_size=k + 8))))
def test_separation_brute_force_and_triangle(case):
    k, values = case
    lay = layout([1] * k + [-1] * (len(values) - k))
    intra, inter = separation_stats(values, lay)
    plus, minus = values[:k], values[k:]
    assert intra == max(max(plus) - min(plus), max(minus) - min(minus))
    assert inter == min(abs(a - b) for a in plus for b in minus)
    # any cross pair is within (inter + 2 * intra) of each other... and the
    # widest cross gap is bounded by the closest one plus both diameters
    widest = max(abs(a - b) for a in plus for b in minus)
    assert widest <= inter + 2 * intra + 1e-12
    if inter > intra:
        _, labels, _ = kmeans2(values)
        # a clean gap is found exactly, up to the orientation of the labels
        assert math.isclose(abs(int(labels.sum())), abs(2 * k - len(values)))
