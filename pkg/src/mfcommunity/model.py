"""Model parameters, community layout and the random environment.

The model: ``N`` binary chains split into an excitatory community ``P+`` and
an inhibitory community ``P-``, coupled through an i.i.d. Bernoulli(p)
connectivity matrix ``theta``.  Given the previous configuration ``x``,
component ``i`` fires with probability

    mu + (1 - lam) / N * (sum_{j in P+} theta_ij x_j + sum_{j in P-} theta_ij (1 - x_j))

with ``mu = lam * beta``.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .seeding import make_rng

__all__ = [
    "ParameterError",
    "ModelParams",
    "CommunityLayout",
    "Environment",
    "TheoreticalConstants",
    "DEFAULT_PARAMS",
    "validate_params",
    "build_layout",
    "sample_environment",
    "signed_matrix",
    "row_col_sums",
    "theoretical_constants",
    "save_environment",
    "load_environment",
    "environment_to_dict",
    "environment_from_dict",
]


class ParameterError(ValueError):
    """Raised when a model parameter is out of range; ``field`` names it."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


@dataclass(frozen=True)
class ModelParams:
    n_components: int
    r_plus: float
    beta: float
    lam: float
    p: float

    @property
    def mu(self) -> float:
        return self.lam * self.beta

    @property
    def r_minus(self) -> float:
        return 1.0 - self.r_plus

    @property
    def plus_count(self) -> int:
        # round first so that e.g. 0.55 * 20 = 11.000000000000002 stays 11
        return math.ceil(round(self.r_plus * self.n_components, 9))

    def replace(self, **changes) -> "ModelParams":
        d = asdict(self)
        d.update(changes)
        return validate_params(**d)


def validate_params(n_components, r_plus, beta, lam, p) -> ModelParams:
    """Check the five scalars against the admissible ranges of the model."""
    if isinstance(n_components, bool) or int(n_components) != n_components:
        raise ParameterError("n_components", f"must be an integer, got {n_components!r}")
    n_components = int(n_components)
    if n_components < 2:
        raise ParameterError("n_components", f"must be >= 2, got {n_components}")
    checks = [
        ("r_plus", r_plus, 0.0 < r_plus < 1.0, "must lie in (0, 1)"),
        ("beta", beta, 0.0 <= beta <= 1.0, "must lie in [0, 1]"),
        ("lam", lam, 0.0 < lam < 1.0, "must lie in (0, 1)"),
        ("p", p, 0.0 <= p <= 1.0, "must lie in [0, 1]"),
    ]
    for name, value, ok, msg in checks:
        if not isinstance(value, (int, float, np.floating, np.integer)) or not math.isfinite(value):
            raise ParameterError(name, f"must be a finite real, got {value!r}")
        if not ok:
            raise ParameterError(name, f"{msg}, got {value}")
    params = ModelParams(n_components, float(r_plus), float(beta), float(lam), float(p))
    if params.plus_count >= n_components:
        raise ParameterError(
            "r_plus", f"ceil(r_plus * N) = {params.plus_count} leaves the inhibitory community empty"
        )
    return params


DEFAULT_PARAMS = validate_params(50, 0.5, 0.5, 0.5, 0.5)


@dataclass(frozen=True)
class CommunityLayout:
    plus_count: int
    labels: np.ndarray  # int8, +1 for P+, -1 for P-

    @property
    def n_components(self) -> int:
        return int(self.labels.shape[0])

    @property
    def plus_mask(self) -> np.ndarray:
        return self.labels > 0

    @property
    def minus_mask(self) -> np.ndarray:
        return self.labels < 0

    @property
    def minus_count(self) -> int:
        return self.n_components - self.plus_count


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def build_layout(params: ModelParams, shuffle_seed: int | None = None) -> CommunityLayout:
    """First ``ceil(r_plus * N)`` components are excitatory, the rest inhibitory.

    ``shuffle_seed`` applies a seeded permutation of the labels instead of
    the canonical ordering.
    """
    n = params.n_components
    k = params.plus_count
    labels = np.full(n, -1, dtype=np.int8)
    labels[:k] = 1
    if shuffle_seed is not None:
        labels = make_rng(shuffle_seed).permutation(labels)
    return CommunityLayout(k, _frozen(labels))


@dataclass(frozen=True)
class Environment:
    params: ModelParams
    layout: CommunityLayout
    theta: np.ndarray  # uint8, N x N, theta[i, j] = 1 if j influences i
    seed: int

    @property
    def n_components(self) -> int:
        return self.params.n_components

    @property
    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(json.dumps(asdict(self.params), sort_keys=True).encode())
        h.update(self.layout.labels.tobytes())
        h.update(np.ascontiguousarray(self.theta).tobytes())
        return h.hexdigest()[:16]


def sample_environment(params: ModelParams, layout: CommunityLayout, seed: int) -> Environment:
    """Draw ``theta`` with i.i.d. Bernoulli(p) entries from a seeded generator."""
    n = params.n_components
    if layout.n_components != n:
        raise ValueError(f"layout has {layout.n_components} components, params say {n}")
    rng = make_rng(seed)
    theta = (rng.random((n, n)) < params.p).astype(np.uint8)
    return Environment(params, layout, _frozen(theta), int(seed))


def signed_matrix(env: Environment) -> np.ndarray:
    """``A[i, j] = labels[j] * theta[i, j] / N``."""
    n = env.n_components
    return env.theta * (env.layout.labels.astype(np.float64) / n)[None, :]


def row_col_sums(env: Environment) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Row sums ``L = A 1``, column sums ``C = 1^T A`` and ``L_minus = A 1_{P-}``."""
    a = signed_matrix(env)
    row = a.sum(axis=1)
    col = a.sum(axis=0)
    row_minus = a[:, env.layout.minus_mask].sum(axis=1)
    return row, col, row_minus


@dataclass(frozen=True)
class TheoreticalConstants:
    m: float
    c1: float
    bias: float
    c2: float
    sigma_plus: float
    sigma_minus: float
    separation: float
    stein_offdiag: float


def theoretical_constants(params: ModelParams) -> TheoreticalConstants:
    """Large-N limits of the mean activity and of the lag-1 column sums.

    ``bias`` is the coefficient multiplying ``J/N`` inside the first-order
    approximation ``Sigma1 ~ c1 * (A + bias * J / N)``; ``c2 = c1 * bias``.
    ``stein_offdiag`` is the off-diagonal level of the simultaneous
    covariance, ``Sigma0 ~ diag(v) + stein_offdiag * (J - I) / N``.
    """
    lam, p, mu = params.lam, params.p, params.mu
    dr = params.r_plus - params.r_minus
    m = (mu + (1 - lam) * p * params.r_minus) / (1 - p * (1 - lam) * dr)
    var = m * (1 - m)
    denom = 1 - p**2 * dr**2
    c1 = (1 - lam) * var
    bias = (1 - lam) ** 2 * p**3 * dr / denom
    shift = (1 - lam) ** 2 * p**2 * dr / denom
    scale = (1 - lam) * p * var
    return TheoreticalConstants(
        m=m,
        c1=c1,
        bias=bias,
        c2=c1 * bias,
        sigma_plus=scale * (shift + 1),
        sigma_minus=scale * (shift - 1),
        separation=2 * scale,
        stein_offdiag=(1 - lam) ** 2 * p**2 * var / denom,
    )


# -- serialization -----------------------------------------------------------

ENV_FORMAT = "mfcommunity-environment"


def environment_to_dict(env: Environment, encoding: str = "hex") -> dict:
    params = asdict(env.params)
    if encoding == "hex":
        theta = [row.tobytes().hex() for row in np.packbits(env.theta, axis=1)]
    elif encoding == "rows01":
        theta = ["".join("1" if b else "0" for b in row) for row in env.theta]
    else:
        raise ValueError(f"unknown theta encoding {encoding!r}")
    return {
        "format": ENV_FORMAT,
        "version": 1,
        "params": params,
        "layout": {"plus_count": env.layout.plus_count, "labels": env.layout.labels.tolist()},
        "seed": env.seed,
        "theta_encoding": encoding,
        "theta": theta,
    }


def environment_from_dict(d: dict) -> Environment:
    if d.get("format") != ENV_FORMAT:
        raise ValueError("not an environment document")
    params = validate_params(**d["params"])
    n = params.n_components
    labels = np.asarray(d["layout"]["labels"], dtype=np.int8)
    if labels.shape != (n,) or not np.all(np.abs(labels) == 1):
        raise ValueError("layout labels must be N values in {+1, -1}")
    layout = CommunityLayout(int(d["layout"]["plus_count"]), _frozen(labels))
    if int((labels > 0).sum()) != layout.plus_count:
        raise ValueError("plus_count does not match labels")
    enc = d["theta_encoding"]
    rows = d["theta"]
    if len(rows) != n:
        raise ValueError(f"theta has {len(rows)} rows, expected {n}")
    if enc == "hex":
        packed = np.array([np.frombuffer(bytes.fromhex(r), dtype=np.uint8) for r in rows])
        theta = np.unpackbits(packed, axis=1, count=n)
    elif enc == "rows01":
        theta = np.array([[c == "1" for c in r] for r in rows], dtype=np.uint8)
    else:
        raise ValueError(f"unknown theta encoding {enc!r}")
    if theta.shape != (n, n):
        raise ValueError("theta has the wrong shape")
    return Environment(params, layout, _frozen(theta.astype(np.uint8)), int(d["seed"]))


def save_environment(env: Environment, path: str | Path, encoding: str = "hex") -> None:
    Path(path).write_text(json.dumps(environment_to_dict(env, encoding)) + "\n")


def load_environment(path: str | Path) -> Environment:
    return environment_from_dict(json.loads(Path(path).read_text()))
