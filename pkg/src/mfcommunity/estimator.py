"""Community recovery from an observed trajectory.

``sigma_hat[j]`` estimates the column sums of the lag-1 covariance matrix.
It is computed from integer sufficient statistics (see
:class:`~mfcommunity.simulator.LagCounts`)::

    sigma_hat[j] = lag[j] / (T - 1) - (sum_i Z_i) * Z_j / T**2

which is the aggregated form of the double-sum definition.  Because
``lag`` and ``Z`` are exact integers the only rounding happens in the final
two divisions.  The estimate is split into two groups with Lloyd's
algorithm on the real line, started at ``(min, max)``; the group with the
larger centroid is the excitatory estimate.
"""

from __future__ import annotations

from dataclasses import dataclass
import math
from fractions import Fraction

import numpy as np

from .model import CommunityLayout
from .simulator import LagCounts, Trajectory, TrajectorySummary, lag_counts

__all__ = [
    "DegenerateInputError",
    "RecoveryResult",
    "RecoveryScore",
    "sigma_hat",
    "sigma_hat_from_counts",
    "sigma_hat_exact",
    "sigma_hat_double_sum",
    "empirical_covariances",
    "kmeans2",
    "recover",
    "score",
    "failed_score",
    "separation_stats",
]


class DegenerateInputError(ValueError):
    """All values coincide; there is nothing to split."""


@dataclass(frozen=True)
class RecoveryResult:
    sigma_hat: np.ndarray
    centroids: tuple[float, float]  # (low, high)
    labels_hat: np.ndarray
    kmeans_iters: int


@dataclass(frozen=True)
class RecoveryScore:
    exact: bool
    misclassified_fraction: float


def sigma_hat_from_counts(stats: LagCounts) -> np.ndarray:
    t = stats.t_samples
    if t < 2:
        raise ValueError(f"need at least 2 samples, got T={t}")
    total = int(stats.counts.sum())
    if total * t >= 2**53:
        # integer products no longer exact in float64; go through rationals
        return np.array([float(f) for f in sigma_hat_exact(stats)])
    return stats.lag_products / (t - 1) - (total * stats.counts).astype(np.float64) / (t * t)


def sigma_hat(traj: Trajectory, summary: TrajectorySummary | None = None) -> np.ndarray:
    """Estimate of the lag-1 column sums from a trajectory.

    ``summary`` is accepted for symmetry with the summary pipeline; the
    counts are recomputed together with the lag products in one pass.
    """
    if traj.t_samples < 2:
        raise ValueError(f"need at least 2 samples, got T={traj.t_samples}")
    return sigma_hat_from_counts(lag_counts(traj))


def sigma_hat_exact(stats: LagCounts) -> list[Fraction]:
    """Aggregated form evaluated in rational arithmetic."""
    t = stats.t_samples
    if t < 2:
        raise ValueError(f"need at least 2 samples, got T={t}")
    total = int(stats.counts.sum())
    return [Fraction(int(l), t - 1) - Fraction(total * int(z), t * t)
            for l, z in zip(stats.lag_products, stats.counts)]


def sigma_hat_double_sum(states) -> list[Fraction]:
    """Reference evaluation of the defining double sum, in exact arithmetic.

    Deliberately naive: O(N^2 T) Python loops.  Only for small test instances.
    """
    x = [[int(v) for v in row] for row in np.asarray(states)]
    t_len, n = len(x), len(x[0])
    z = [sum(x[t][i] for t in range(t_len)) for i in range(n)]
    out = []
    for j in range(n):
        acc = Fraction(0)
        for i in range(n):
            cross = Fraction(sum(x[t][i] * x[t - 1][j] for t in range(1, t_len)), t_len - 1)
            acc += cross - Fraction(z[i], t_len) * Fraction(z[j], t_len)
        out.append(acc)
    return out


def empirical_covariances(traj: Trajectory) -> tuple[np.ndarray, np.ndarray]:
    """Empirical lag-0 and lag-1 covariance matrices.

    ``lag1[i, j]`` estimates ``cov(X_{i,t}, X_{j,t-1})``.
    """
    x = traj.states.astype(np.float64)
    centered = x - x.mean(axis=0)
    t = x.shape[0]
    lag0 = centered.T @ centered / t
    lag1 = centered[1:].T @ centered[:-1] / (t - 1)
    return lag0, lag1


def kmeans2(values, max_iter: int = 100) -> tuple[tuple[float, float], np.ndarray, int]:
    """Two-cluster Lloyd iteration on scalars, initialised at ``(min, max)``.

    A value equidistant from both centroids joins the lower cluster.
    Returns ``((c_low, c_high), labels, iterations)`` with labels +1 for the
    higher cluster.  ``iterations`` counts assignment steps, the last one
    being the step that reproduced the previous partition (or the first
    assignment when it is already stable).

    Lloyd's iteration can stall in a local optimum.  On the line the global
    optimum is a threshold split, so the stable partition is compared with
    the best threshold and replaced by it when strictly worse; the optimum
    is itself Lloyd-stable, which costs one more assignment step.
    """
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 1 or v.size < 2:
        raise ValueError("kmeans2 needs a vector of at least 2 values")
    lo, hi = float(v.min()), float(v.max())
    if lo == hi:
        raise DegenerateInputError("all values are identical")
    high = np.abs(v - hi) < np.abs(v - lo)
    it = 1
    while True:
        lo, hi = _mean(v[~high]), _mean(v[high])
        new_high = np.abs(v - hi) < np.abs(v - lo)
        if np.array_equal(new_high, high) or it >= max_iter:
            break
        high = new_high
        it += 1
        if not high.any() or high.all():
            raise DegenerateInputError("a cluster became empty")
    cut, best = _best_threshold(v)
    if best < _sse(v, high) - 1e-12 * max(best, _sse(v, np.ones_like(high))):
        high = v > cut
        lo, hi = _mean(v[~high]), _mean(v[high])
        it += 1
    labels = np.where(high, 1, -1).astype(np.int8)
    return (lo, hi), labels, it


def _sse(v: np.ndarray, high: np.ndarray) -> float:
    return sum(float(((v[m] - _mean(v[m])) ** 2).sum()) for m in (high, ~high) if m.any())


def _best_threshold(v: np.ndarray) -> tuple[float, float]:
    """Split point and within-cluster SSE of the optimal threshold split."""
    s = np.sort(v)
    s = s - s.mean()
    n = s.size
    k = np.arange(1, n)
    c1, c2 = np.cumsum(s)[:-1], np.cumsum(s * s)[:-1]
    tot1, tot2 = c1[-1] + s[-1], c2[-1] + s[-1] ** 2
    cost = (c2 - c1 * c1 / k) + ((tot2 - c2) - (tot1 - c1) ** 2 / (n - k))
    # only cut between distinct values
    cost[s[:-1] == s[1:]] = np.inf
    i = int(np.argmin(cost))
    return float(np.sort(v)[i]), float(cost[i])


def _mean(x: np.ndarray) -> float:
    # correctly rounded sum: centroids do not depend on the input order
    return math.fsum(x) / x.size


def recover(values, max_iter: int = 100) -> RecoveryResult:
    values = np.asarray(values, dtype=np.float64)
    cents, labels, it = kmeans2(values, max_iter)
    return RecoveryResult(values, cents, labels, it)


def score(labels_hat, layout: CommunityLayout) -> RecoveryScore:
    """Labelled comparison: excitatory estimate vs the true excitatory set."""
    labels_hat = np.asarray(labels_hat)
    if labels_hat.shape != layout.labels.shape:
        raise ValueError("label vectors differ in length")
    wrong = int(np.count_nonzero(labels_hat != layout.labels))
    return RecoveryScore(wrong == 0, wrong / layout.n_components)


def failed_score(layout: CommunityLayout) -> RecoveryScore:
    """Score assigned when no split could be computed."""
    return RecoveryScore(False, min(layout.plus_count, layout.minus_count) / layout.n_components)


def separation_stats(values, layout: CommunityLayout) -> tuple[float, float]:
    """(largest within-community gap, smallest cross-community gap)."""
    v = np.asarray(values, dtype=np.float64)
    plus, minus = v[layout.plus_mask], v[layout.minus_mask]
    intra = max(float(np.ptp(plus)) if plus.size else 0.0, float(np.ptp(minus)) if minus.size else 0.0)
    if not plus.size or not minus.size:
        return intra, float("nan")
    # smallest |a - b| across sorted sets
    s = np.sort(minus)
    pos = np.searchsorted(s, plus)
    best = np.inf
    for off in (-1, 0):
        k = np.clip(pos + off, 0, s.size - 1)
        best = min(best, float(np.min(np.abs(plus - s[k]))))
    return intra, best
