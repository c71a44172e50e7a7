"""Acceptance criteria 1-8.

Each test prints one ``ACCEPTANCE [k] PASS/FAIL`` line (repeated in the
terminal summary) and then asserts the same condition.  Tolerances and
runtime limits are fixed here and must not be loosened.
"""

import csv
import io
import time
from fractions import Fraction

import numpy as np

from mfcommunity.estimator import empirical_covariances, kmeans2, sigma_hat_double_sum, sigma_hat_exact, sigma_hat_from_counts
from mfcommunity.experiment import ExperimentSpec, cells_to_csv, run_cell, run_heatmap, run_sweep
from mfcommunity.model import DEFAULT_PARAMS, build_layout, sample_environment, validate_params
from mfcommunity.oracle import approximation_residuals, compute_oracle, sigma1_from_sigma0, sigma_vector, solve_mean_vector, solve_sigma0
from mfcommunity.seeding import derive_seed, make_rng
from mfcommunity.simulator import SimConfig, Trajectory, lag_counts, simulate, simulate_counts


def env_for(params, seed):
    return sample_environment(params, build_layout(params), seed)


# 1 ---------------------------------------------------------------------------------


def test_criterion_1_oracle_closed_form(acceptance):
    start = time.perf_counter()
    env = env_for(validate_params(2, 0.5, 0.5, 0.5, 1.0), 0)
    m = solve_mean_vector(env)
    s0 = solve_sigma0(env, m)
    sig = sigma_vector(sigma1_from_sigma0(env, s0))
    elapsed = time.perf_counter() - start
    off_err = abs(s0[0, 1] - 1 / 36)
    sig_err = float(np.max(np.abs(sig - [1 / 9, -1 / 9])))
    ok = off_err <= 1e-10 and sig_err <= 1e-10 and elapsed < 1.0
    assert acceptance(1, ok, f"offdiag err={off_err:.1e} sigma err={sig_err:.1e} (tol 1e-10) time={elapsed:.3f}s (<1s)")


# 2 ---------------------------------------------------------------------------------


def test_criterion_2_simulation_matches_oracle_covariances(acceptance):
    start = time.perf_counter()
    prm = DEFAULT_PARAMS.replace(n_components=6)
    env = env_for(prm, derive_seed(2, 0))
    oq = compute_oracle(env)
    lag0, lag1 = empirical_covariances(simulate(env, SimConfig(500_000, seed=derive_seed(2, 1))))
    e0 = float(np.max(np.abs(lag0 - oq.sigma0)))
    e1 = float(np.max(np.abs(lag1 - oq.sigma1)))
    elapsed = time.perf_counter() - start
    ok = e0 <= 5e-3 and e1 <= 5e-3 and elapsed < 120
    assert acceptance(2, ok, f"lag0 err={e0:.2e} lag1 err={e1:.2e} (tol 5e-3) time={elapsed:.1f}s (<120s)")


# 3 ---------------------------------------------------------------------------------


def test_criterion_3_column_sum_rate_in_n(acceptance):
    start = time.perf_counter()

    def mean_supnorm(n):
        prm = DEFAULT_PARAMS.replace(n_components=n)
        vals = []
        for s in range(20):
            env = env_for(prm, derive_seed(3, n, s))
            vals.append(approximation_residuals(env, compute_oracle(env)).thm2_supnorm)
        return float(np.mean(vals))

    small, large = mean_supnorm(25), mean_supnorm(200)
    ratio = large / small
    elapsed = time.perf_counter() - start
    ok = large < small and 0.2 <= ratio <= 0.8 and elapsed < 300
    assert acceptance(3, ok, f"N=25: {small:.4f} N=200: {large:.4f} ratio={ratio:.3f} (in [0.2, 0.8]) time={elapsed:.1f}s (<300s)")


# 4 ---------------------------------------------------------------------------------


def test_criterion_4_estimator_rate_in_t(acceptance):
    start = time.perf_counter()
    prm = DEFAULT_PARAMS.replace(n_components=20)
    errs = {10_000: [], 40_000: []}
    for r in range(20):
        # the same environment serves both T so the ratio isolates the 1/sqrt(T) factor
        env = env_for(prm, derive_seed(4, r))
        exact = compute_oracle(env).sigma_vec
        for t in errs:
            stats = simulate_counts(env, SimConfig(t, seed=derive_seed(4, r, t)))
            errs[t].append(float(np.max(np.abs(sigma_hat_from_counts(stats) - exact))))
    ratio = np.mean(errs[40_000]) / np.mean(errs[10_000])
    elapsed = time.perf_counter() - start
    ok = 0.3 <= ratio <= 0.7 and elapsed < 180
    assert acceptance(4, ok, f"T=1e4: {np.mean(errs[10_000]):.4f} T=4e4: {np.mean(errs[40_000]):.4f} "
                             f"ratio={ratio:.3f} (in [0.3, 0.7]) time={elapsed:.1f}s (<180s)")


# 5 ---------------------------------------------------------------------------------


def test_criterion_5_phase_diagram(acceptance):
    start = time.perf_counter()
    prm = DEFAULT_PARAMS.replace(n_components=20)
    spec = ExperimentSpec(base=prm, t_grid=(100, 80_000), n_grid=(20,), n_replicas=100, master_seed=5)
    low, high = run_heatmap(spec)
    elapsed = time.perf_counter() - start
    ok = high.per_hat >= 0.9 and low.per_hat <= 0.1 and elapsed < 600
    assert acceptance(5, ok, f"per_hat(T=100)={low.per_hat:.2f} (<=0.1) per_hat(T=8e4)={high.per_hat:.2f} (>=0.9) "
                             f"time={elapsed:.1f}s (<600s)")


# 6 ---------------------------------------------------------------------------------


def _sweep(name, values):
    spec = ExperimentSpec(base=DEFAULT_PARAMS, t_grid=(5000,), sweep=(name, values), n_replicas=200, master_seed=6)
    cells = run_sweep(spec)
    return [c.per_hat for c in cells], [c.per_stderr for c in cells]


def _monotone(per, se, sign):
    # successive differences may go the wrong way by at most 2 combined standard errors
    return all(sign * (b - a) >= -2 * np.hypot(sa, sb) for a, b, sa, sb in zip(per, per[1:], se, se[1:]))


def test_criterion_6_sweep_monotonicity(acceptance):
    start = time.perf_counter()
    grid = (0.3, 0.4, 0.5, 0.6, 0.7)
    lam_per, lam_se = _sweep("lambda", grid)
    p_per, p_se = _sweep("p", grid)
    beta_per, beta_se = _sweep("beta", (0.2, 0.35, 0.5, 0.65, 0.8))
    elapsed = time.perf_counter() - start
    lam_ok = _monotone(lam_per, lam_se, -1)
    p_ok = _monotone(p_per, p_se, +1)
    beta_ok = all(abs(a - b) <= 3 * np.hypot(sa, sb)
                  for i, (a, sa) in enumerate(zip(beta_per, beta_se))
                  for b, sb in zip(beta_per[i + 1:], beta_se[i + 1:]))
    ok = lam_ok and p_ok and beta_ok and elapsed < 600

    def fmt(xs):
        return "/".join(f"{x:.3f}" for x in xs)

    assert acceptance(6, ok, f"lambda {fmt(lam_per)} ({'ok' if lam_ok else 'violated'}), "
                             f"p {fmt(p_per)} ({'ok' if p_ok else 'violated'}), "
                             f"beta {fmt(beta_per)} ({'flat' if beta_ok else 'not flat'}) time={elapsed:.1f}s (<600s)")


# 7 ---------------------------------------------------------------------------------


def _exact_sse(values, high):
    total = Fraction(0)
    for group in ([Fraction(v) for v, h in zip(values, high) if h], [Fraction(v) for v, h in zip(values, high) if not h]):
        mean = sum(group) / len(group)
        total += sum((g - mean) ** 2 for g in group)
    return total


def test_criterion_7_brute_force_equivalence(acceptance):
    rng = make_rng(derive_seed(7, 0))
    est_ok = 0
    for _ in range(100):
        n, t = int(rng.integers(1, 5)), int(rng.integers(2, 7))
        states = (rng.random((t, n)) < rng.random()).astype(np.uint8)
        if sigma_hat_exact(lag_counts(Trajectory.from_states(states))) == sigma_hat_double_sum(states):
            est_ok += 1

    draws = [
        lambda k: rng.standard_normal(k),
        lambda k: rng.random(k),
        lambda k: rng.standard_cauchy(k),
        lambda k: rng.exponential(1.0, k),
        lambda k: np.concatenate([rng.normal(1, 0.3, k // 2), rng.normal(-1, 0.3, k - k // 2)]),
    ]
    km_ok = 0
    for case in range(1000):
        n = int(rng.integers(2, 13))
        v = draws[case % len(draws)](n)
        _, labels, _ = kmeans2(v)
        order = np.sort(v)
        splits = [v > c for c in order[:-1]]
        costs = [_exact_sse(v, s) for s in splits]
        best = splits[int(np.argmin(costs))]
        if np.array_equal(labels == 1, best):
            km_ok += 1
    ok = est_ok == 100 and km_ok == 1000
    assert acceptance(7, ok, f"sigma_hat exact {est_ok}/100, kmeans2 best threshold {km_ok}/1000")


# 8 ---------------------------------------------------------------------------------


def _data_bytes(text):
    # everything except the wall-clock column
    rows = list(csv.reader(io.StringIO(text)))
    drop = rows[0].index("wall_time_s")
    return "\n".join(",".join(c for i, c in enumerate(r) if i != drop) for r in rows).encode()


def test_criterion_8_determinism_and_parallel_equivalence(acceptance):
    spec = ExperimentSpec(base=DEFAULT_PARAMS.replace(n_components=12), t_grid=(200, 2000), n_grid=(8, 12),
                          n_replicas=16, master_seed=8)
    same_bytes = _data_bytes(cells_to_csv(run_heatmap(spec, workers=1))) == _data_bytes(cells_to_csv(run_heatmap(spec, workers=1)))
    prm = DEFAULT_PARAMS.replace(n_components=12)
    one = run_cell(prm, 1000, 40, master_seed=8, workers=1)
    eight = run_cell(prm, 1000, 40, master_seed=8, workers=8)
    same_outcomes = one.outcomes == eight.outcomes
    ok = same_bytes and same_outcomes
    assert acceptance(8, ok, f"repeat CSV data identical: {same_bytes}; 1 vs 8 workers identical: {same_outcomes}")
