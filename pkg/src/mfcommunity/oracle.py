"""Exact environment-conditional moments of the stationary chain.

Everything here is deterministic given an :class:`Environment`:

* the stationary mean vector solves ``m = mu 1 + (1-lam)(A m - L_minus)``;
* the simultaneous covariance ``S0`` solves the Stein-type equation
  ``S0 = (1-lam)^2 offdiag(A S0 A^T) + diag(v)`` with ``v = m (1 - m)``;
* the lag-1 covariance is ``S1 = (1-lam) A S0`` and ``sigma = 1^T S1``.

Both fixed points are contractions in the max norm (factors ``1-lam`` and
``(1-lam)^2``) because every row of ``A`` has absolute sum at most 1, so
plain iteration converges geometrically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import Environment, TheoreticalConstants, row_col_sums, signed_matrix, theoretical_constants

__all__ = [
    "ConvergenceError",
    "OracleQuantities",
    "Residuals",
    "solve_mean_vector",
    "mean_vector_via_resolvent",
    "variance_vector",
    "solve_sigma0",
    "stein_residual",
    "sigma1_from_sigma0",
    "sigma_vector",
    "sigma_limit_vector",
    "compute_oracle",
    "approximation_residuals",
    "environment_diagnostics",
]

DEFAULT_TOL = 1e-12
DEFAULT_MAX_ITER = 10_000
DEFAULT_MAX_N = 2000


class ConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class OracleQuantities:
    mean_vec: np.ndarray
    var_vec: np.ndarray
    sigma0: np.ndarray
    sigma1: np.ndarray
    sigma_vec: np.ndarray
    iterations: int
    residual: float


@dataclass(frozen=True)
class Residuals:
    thm1_maxnorm: float  # ||S1 - c1 (A + bias J / N)||_max
    thm2_supnorm: float  # ||sigma - sigma_limit||_inf
    prop43_maxnorm: float  # ||S0 - (diag(v) + k (J - I) / N)||_max


def _fixed_point(update, x0, tol, max_iter, what):
    x = x0
    for it in range(1, max_iter + 1):
        nxt = update(x)
        inc = float(np.max(np.abs(nxt - x))) if nxt.size else 0.0
        x = nxt
        if inc <= tol:
            return x, it, inc
    raise ConvergenceError(f"{what}: no convergence after {max_iter} iterations (last increment {inc:.3e})")


def solve_mean_vector(env: Environment, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER) -> np.ndarray:
    """Stationary mean vector, iterated from ``mu 1``."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    a = signed_matrix(env)
    _, _, row_minus = row_col_sums(env)
    mu, q = env.params.mu, 1 - env.params.lam
    const = mu - q * row_minus
    m, _, _ = _fixed_point(lambda m: const + q * (a @ m), np.full(env.n_components, mu), tol, max_iter, "mean vector")
    return m


def mean_vector_via_resolvent(env: Environment, tol: float = DEFAULT_TOL,
                              max_iter: int = DEFAULT_MAX_ITER) -> np.ndarray:
    """Cross-check ``m = mu l + 1_{P-} - l_minus`` where ``l = Q 1`` and
    ``l_minus = Q 1_{P-}`` with ``Q = (I - (1-lam) A)^{-1}``.

    ``l`` and ``l_minus`` are obtained as fixed points of ``y -> b + (1-lam) A y``.
    """
    a = signed_matrix(env)
    q = 1 - env.params.lam
    ones = np.ones(env.n_components)
    minus = env.layout.minus_mask.astype(np.float64)
    ell, _, _ = _fixed_point(lambda y: ones + q * (a @ y), ones, tol, max_iter, "l")
    ell_minus, _, _ = _fixed_point(lambda y: minus + q * (a @ y), minus, tol, max_iter, "l_minus")
    return env.params.mu * ell + minus - ell_minus


def variance_vector(mean_vec) -> np.ndarray:
    mean_vec = np.asarray(mean_vec, dtype=np.float64)
    return mean_vec * (1 - mean_vec)


def solve_sigma0(env: Environment, mean_vec, tol: float = DEFAULT_TOL,
                 max_iter: int = DEFAULT_MAX_ITER, *, return_info: bool = False):
    """Simultaneous covariance matrix by fixed-point iteration from ``diag(v)``.

    Stops at the first iterate whose max-norm increment is ``<= tol``.  The
    diagonal is written from ``v`` on every sweep, so it equals ``v`` exactly.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    a = signed_matrix(env)
    v = variance_vector(mean_vec)
    q2 = (1 - env.params.lam) ** 2
    idx = np.diag_indices(env.n_components)

    def update(s):
        nxt = q2 * (a @ s @ a.T)
        nxt = 0.5 * (nxt + nxt.T)
        nxt[idx] = v
        return nxt

    s, it, inc = _fixed_point(update, np.diag(v), tol, max_iter, "Stein equation")
    if return_info:
        return s, it, inc
    return s


def stein_residual(env: Environment, sigma0, mean_vec) -> float:
    a = signed_matrix(env)
    q2 = (1 - env.params.lam) ** 2
    rhs = q2 * (a @ sigma0 @ a.T)
    np.fill_diagonal(rhs, variance_vector(mean_vec))
    return float(np.max(np.abs(sigma0 - rhs)))


def sigma1_from_sigma0(env: Environment, sigma0) -> np.ndarray:
    sigma0 = np.asarray(sigma0, dtype=np.float64)
    n = env.n_components
    if sigma0.shape != (n, n):
        raise ValueError(f"sigma0 has shape {sigma0.shape}, expected ({n}, {n})")
    return (1 - env.params.lam) * (signed_matrix(env) @ sigma0)


def sigma_vector(sigma1) -> np.ndarray:
    """Column sums of the lag-1 covariance matrix."""
    return np.asarray(sigma1).sum(axis=0)


def compute_oracle(env: Environment, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER,
                   max_n: int = DEFAULT_MAX_N) -> OracleQuantities:
    if env.n_components > max_n:
        raise ValueError(f"oracle is dense O(N^3); N={env.n_components} exceeds max_n={max_n}")
    m = solve_mean_vector(env, tol, max_iter)
    s0, it, inc = solve_sigma0(env, m, tol, max_iter, return_info=True)
    s1 = sigma1_from_sigma0(env, s0)
    return OracleQuantities(m, variance_vector(m), s0, s1, sigma_vector(s1), it, inc)


def sigma_limit_vector(env: Environment, constants: TheoreticalConstants | None = None) -> np.ndarray:
    c = constants or theoretical_constants(env.params)
    return np.where(env.layout.labels > 0, c.sigma_plus, c.sigma_minus)


def approximation_residuals(env: Environment, oq: OracleQuantities,
                            constants: TheoreticalConstants | None = None) -> Residuals:
    """Distances between the exact moments and their large-N approximations."""
    c = constants or theoretical_constants(env.params)
    n = env.n_components
    a = signed_matrix(env)
    s1_approx = c.c1 * (a + c.bias / n)
    s0_approx = np.full((n, n), c.stein_offdiag / n)
    np.fill_diagonal(s0_approx, oq.var_vec)
    return Residuals(
        thm1_maxnorm=float(np.max(np.abs(oq.sigma1 - s1_approx))),
        thm2_supnorm=float(np.max(np.abs(oq.sigma_vec - sigma_limit_vector(env, c)))),
        prop43_maxnorm=float(np.max(np.abs(oq.sigma0 - s0_approx))),
    )


def environment_diagnostics(env: Environment, constants: TheoreticalConstants | None = None,
                            mean_vec=None) -> tuple[float, float, float]:
    """Sup-norm deviations of ``L``, ``C`` and ``v`` from their limits."""
    c = constants or theoretical_constants(env.params)
    prm = env.params
    row, col, _ = row_col_sums(env)
    if mean_vec is None:
        mean_vec = solve_mean_vector(env)
    l_err = float(np.max(np.abs(row - prm.p * (prm.r_plus - prm.r_minus))))
    c_err = float(np.max(np.abs(col - prm.p * env.layout.labels)))
    v_err = float(np.max(np.abs(variance_vector(mean_vec) - c.m * (1 - c.m))))
    return l_err, c_err, v_err


def iteration_bound(first_increment: float, tol: float, lam: float) -> int:
    """Upper bound on Stein iterations implied by the contraction factor."""
    if first_increment <= tol:
        return 1
    return math.ceil(math.log(tol / first_increment) / math.log((1 - lam) ** 2)) + 1
