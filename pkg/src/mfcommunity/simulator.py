"""Stationary-regime simulation of the chain for a fixed environment.

The chain is started from i.i.d. Bernoulli(m) (``m`` the large-N mean
activity), run for ``burn_in`` discarded steps and then ``t_samples``
recorded steps.  With ``X_0`` the initial draw, the recorded rows are
``X_{B+1}, ..., X_{B+T}``.

Each coordinate ``i`` fires when ``u[t, i] < mu + (1 - lam) / N * drive_i``
where ``u`` is a row of uniforms drawn as ``rng.random(N)`` and ``drive_i``
is the integer count
``sum_{j in P+} theta_ij x_j + sum_{j in P-} theta_ij (1 - x_j)``.
The compiled kernel keeps ``drive`` up to date by walking the adjacency
columns of the coordinates that flipped, and recomputes it from the rows
when more than half of the coordinates flipped.
"""

from __future__ import annotations

import io
import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO, TextIO

import numba
import numpy as np

from .model import Environment, signed_matrix, row_col_sums, theoretical_constants
from .seeding import make_rng

__all__ = [
    "SimConfig",
    "Trajectory",
    "TrajectorySummary",
    "LagCounts",
    "default_burn_in",
    "transition_probs",
    "step",
    "simulate",
    "simulate_counts",
    "summarize",
    "lag_counts",
    "write_csv",
    "read_csv",
    "write_binary",
    "read_binary",
    "read_trajectory",
]

BURN_IN_EPS = 1e-6
CHUNK_ROWS = 1 << 14


@dataclass(frozen=True)
class SimConfig:
    t_samples: int
    burn_in: int | None = None  # None -> default_burn_in(params)
    seed: int = 0

    def __post_init__(self):
        if self.t_samples < 1:
            raise ValueError(f"t_samples must be >= 1, got {self.t_samples}")
        if self.burn_in is not None and self.burn_in < 0:
            raise ValueError(f"burn_in must be >= 0, got {self.burn_in}")


def default_burn_in(n_components: int, lam: float, eps: float = BURN_IN_EPS) -> int:
    """``ceil((ln N + ln(1/eps)) / ln(1/(1-lam)))``: coupling bound ``N (1-lam)^B <= eps``."""
    return math.ceil((math.log(n_components) + math.log(1 / eps)) / math.log(1 / (1 - lam)))


@dataclass(frozen=True)
class Trajectory:
    """``T`` recorded configurations, stored as packed bit rows."""

    packed: np.ndarray  # (T, ceil(N / 8)) uint8, MSB-first
    n_components: int
    env_ref: str = ""

    @classmethod
    def from_states(cls, states, env_ref: str = "") -> "Trajectory":
        states = np.asarray(states)
        if states.ndim != 2:
            raise ValueError("states must be a T x N array")
        if not np.isin(states, (0, 1)).all():
            raise ValueError("states must be binary")
        packed = np.packbits(states.astype(np.uint8), axis=1)
        packed.setflags(write=False)
        return cls(packed, int(states.shape[1]), env_ref)

    @property
    def t_samples(self) -> int:
        return int(self.packed.shape[0])

    @property
    def states(self) -> np.ndarray:
        return np.unpackbits(self.packed, axis=1, count=self.n_components)

    def __len__(self) -> int:
        return self.t_samples


@dataclass(frozen=True)
class TrajectorySummary:
    counts: np.ndarray  # Z_{i,T}
    spatial_means: np.ndarray  # per-time mean over components
    grand_mean: float


@dataclass(frozen=True)
class LagCounts:
    """Integer sufficient statistics of the estimator.

    ``counts[j] = sum_t X_{j,t}`` and
    ``lag_products[j] = sum_{t>=2} (sum_i X_{i,t}) X_{j,t-1}``.
    """

    counts: np.ndarray
    lag_products: np.ndarray
    t_samples: int


# -- transition law ------------------------------------------------------------


def _drive(env: Environment, state: np.ndarray) -> np.ndarray:
    plus = env.layout.plus_mask
    theta = env.theta.astype(np.int64)
    x = state.astype(np.int64)
    return theta[:, plus] @ x[plus] + theta[:, ~plus] @ (1 - x[~plus])


def transition_probs(env: Environment, state) -> np.ndarray:
    """Firing probabilities of every component given the previous configuration."""
    state = np.asarray(state)
    n = env.n_components
    if state.shape != (n,):
        raise ValueError(f"state has shape {state.shape}, expected ({n},)")
    prm = env.params
    return prm.mu + ((1 - prm.lam) / n) * _drive(env, state)


def transition_probs_matrix_form(env: Environment, state) -> np.ndarray:
    """Same probabilities via ``mu 1 + (1 - lam) (A x - L_minus)``."""
    a = signed_matrix(env)
    _, _, row_minus = row_col_sums(env)
    prm = env.params
    return prm.mu + (1 - prm.lam) * (a @ np.asarray(state, dtype=np.float64) - row_minus)


def step(env: Environment, state, rng: np.random.Generator) -> np.ndarray:
    """One transition: independent Bernoulli draws with the transition probabilities."""
    probs = transition_probs(env, state)
    return (rng.random(env.n_components) < probs).astype(np.uint8)


# -- compiled kernel -------------------------------------------------------------


@numba.njit(nogil=True, cache=True)
def _full_drive(row_ptr, row_idx, signs, x, drive):
    n = x.shape[0]
    for i in range(n):
        s = 0
        for k in range(row_ptr[i], row_ptr[i + 1]):
            j = row_idx[k]
            if signs[j] > 0:
                s += x[j]
            else:
                s += 1 - x[j]
        drive[i] = s


@numba.njit(nogil=True, cache=True)
def _advance(col_ptr, col_idx, row_ptr, row_idx, signs, base, scale, x, drive, xn,
             uniforms, record, store, out, counts, lag, has_prev, work, incremental):
    n = x.shape[0]
    nnz = row_ptr[n]
    for t in range(uniforms.shape[0]):
        c = 0
        flips = 0
        for i in range(n):
            v = 1 if uniforms[t, i] < base + scale * drive[i] else 0
            xn[i] = v
            c += v
            if v != x[i]:
                flips += 1
        if record:
            if has_prev[0]:
                for j in range(n):
                    if x[j]:
                        lag[j] += c
            has_prev[0] = 1
            for j in range(n):
                counts[j] += xn[j]
            if store:
                for j in range(n):
                    out[t, j] = xn[j]
        if incremental and 2 * flips <= n:
            for j in range(n):
                if xn[j] != x[j]:
                    delta = signs[j] * (xn[j] - x[j])
                    for k in range(col_ptr[j], col_ptr[j + 1]):
                        drive[col_idx[k]] += delta
                    work[0] += col_ptr[j + 1] - col_ptr[j]
                    x[j] = xn[j]
        else:
            for j in range(n):
                x[j] = xn[j]
            _full_drive(row_ptr, row_idx, signs, x, drive)
            work[0] += nnz


class _Chain:
    """Mutable kernel state for one run; not shared between threads."""

    def __init__(self, env: Environment, x0: np.ndarray, incremental: bool = True):
        theta = env.theta
        n = env.n_components
        rows, cols = np.nonzero(theta)  # row-major order
        self.row_ptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(np.bincount(rows, minlength=n), out=self.row_ptr[1:])
        self.row_idx = cols.astype(np.int64)
        ct, cr = np.nonzero(theta.T)
        self.col_ptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(np.bincount(ct, minlength=n), out=self.col_ptr[1:])
        self.col_idx = cr.astype(np.int64)
        self.signs = env.layout.labels.astype(np.int64)
        self.base = float(env.params.mu)
        self.scale = float((1 - env.params.lam) / n)
        self.x = x0.astype(np.int64)
        self.drive = np.zeros(n, dtype=np.int64)
        _full_drive(self.row_ptr, self.row_idx, self.signs, self.x, self.drive)
        self.xn = np.zeros(n, dtype=np.int64)
        self.counts = np.zeros(n, dtype=np.int64)
        self.lag = np.zeros(n, dtype=np.int64)
        self.has_prev = np.zeros(1, dtype=np.int64)
        self.work = np.zeros(1, dtype=np.int64)
        self.incremental = incremental
        self._empty = np.zeros((0, n), dtype=np.uint8)

    def run(self, uniforms: np.ndarray, record: bool, out: np.ndarray | None = None):
        store = out is not None
        _advance(self.col_ptr, self.col_idx, self.row_ptr, self.row_idx, self.signs,
                 self.base, self.scale, self.x, self.drive, self.xn, uniforms,
                 record, store, out if store else self._empty, self.counts, self.lag,
                 self.has_prev, self.work, self.incremental)


def _start(env: Environment, config: SimConfig, incremental: bool) -> tuple[_Chain, np.random.Generator, int]:
    rng = make_rng(config.seed)
    n = env.n_components
    m = min(max(theoretical_constants(env.params).m, 0.0), 1.0)
    x0 = (rng.random(n) < m).astype(np.int64)
    chain = _Chain(env, x0, incremental)
    burn = default_burn_in(n, env.params.lam) if config.burn_in is None else config.burn_in
    done = 0
    while done < burn:
        b = min(CHUNK_ROWS, burn - done)
        chain.run(rng.random((b, n)), record=False)
        done += b
    return chain, rng, burn


def simulate(env: Environment, config: SimConfig, *, incremental: bool = True,
             chunk_rows: int = CHUNK_ROWS) -> Trajectory:
    """Run burn-in then record ``config.t_samples`` configurations."""
    chain, rng, _ = _start(env, config, incremental)
    n = env.n_components
    t = config.t_samples
    packed = np.empty((t, (n + 7) // 8), dtype=np.uint8)
    buf = np.empty((min(chunk_rows, t), n), dtype=np.uint8)
    done = 0
    while done < t:
        b = min(chunk_rows, t - done)
        chain.run(rng.random((b, n)), record=True, out=buf[:b])
        packed[done:done + b] = np.packbits(buf[:b], axis=1)
        done += b
    packed.setflags(write=False)
    return Trajectory(packed, n, env.fingerprint)


def simulate_counts(env: Environment, config: SimConfig, *, incremental: bool = True,
                    chunk_rows: int = CHUNK_ROWS, return_work: bool = False):
    """Like :func:`simulate` but keeps only the estimator's integer statistics.

    Memory is O(N) regardless of ``t_samples``.  With ``return_work`` the
    number of adjacency entries touched while updating drives is returned too.
    """
    chain, rng, _ = _start(env, config, incremental)
    n = env.n_components
    chain.work[0] = 0
    done = 0
    t = config.t_samples
    while done < t:
        b = min(chunk_rows, t - done)
        chain.run(rng.random((b, n)), record=True)
        done += b
    res = LagCounts(chain.counts.copy(), chain.lag.copy(), t)
    if return_work:
        return res, int(chain.work[0])
    return res


# -- summaries -------------------------------------------------------------------


def summarize(traj: Trajectory) -> TrajectorySummary:
    states = traj.states
    counts = states.sum(axis=0, dtype=np.int64)
    spatial = states.mean(axis=1)
    grand = float(counts.sum() / (traj.t_samples * traj.n_components))
    return TrajectorySummary(counts, spatial, grand)


def lag_counts(traj: Trajectory) -> LagCounts:
    states = traj.states.astype(np.int64)
    per_time = states.sum(axis=1)
    lag = per_time[1:] @ states[:-1]
    return LagCounts(states.sum(axis=0), lag, traj.t_samples)


# -- file formats ----------------------------------------------------------------

BINARY_MAGIC = b"MFCTRAJ1"
_HEADER = struct.Struct("<IQI")  # N, T, len(env_ref)


def write_csv(traj: Trajectory, f: TextIO) -> None:
    n = traj.n_components
    f.write("t," + ",".join(f"x{i + 1}" for i in range(n)) + "\n")
    states = traj.states
    for t in range(traj.t_samples):
        f.write(f"{t + 1}," + ",".join("1" if v else "0" for v in states[t]) + "\n")


def read_csv(f: TextIO, env_ref: str = "") -> Trajectory:
    header = f.readline().strip().split(",")
    if not header or header[0] != "t":
        raise ValueError("trajectory CSV must start with a 't,x1,...' header")
    data = np.loadtxt(f, delimiter=",", dtype=np.int64, ndmin=2)
    if data.shape[1] != len(header):
        raise ValueError("row width does not match header")
    return Trajectory.from_states(data[:, 1:], env_ref)


def write_binary(traj: Trajectory, f: BinaryIO) -> None:
    ref = traj.env_ref.encode()
    f.write(BINARY_MAGIC)
    f.write(_HEADER.pack(traj.n_components, traj.t_samples, len(ref)))
    f.write(ref)
    f.write(np.ascontiguousarray(traj.packed).tobytes())


def read_binary(f: BinaryIO) -> Trajectory:
    if f.read(len(BINARY_MAGIC)) != BINARY_MAGIC:
        raise ValueError("not a binary trajectory file")
    n, t, lref = _HEADER.unpack(f.read(_HEADER.size))
    ref = f.read(lref).decode()
    width = (n + 7) // 8
    raw = f.read(t * width)
    if len(raw) != t * width:
        raise ValueError("truncated trajectory file")
    packed = np.frombuffer(raw, dtype=np.uint8).reshape(t, width).copy()
    packed.setflags(write=False)
    return Trajectory(packed, n, ref)


def read_trajectory(path: str | Path) -> Trajectory:
    """Read either format, sniffing the binary magic."""
    data = Path(path).read_bytes()
    if data.startswith(BINARY_MAGIC):
        return read_binary(io.BytesIO(data))
    return read_csv(io.StringIO(data.decode()))
