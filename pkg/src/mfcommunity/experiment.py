"""Monte Carlo estimation of PER and MMP over replicas, grids and sweeps.

PER is the probability of exact recovery and MMP the mean misclassified
proportion.  Both are taken under the joint law of the environment and the
chain, so every replica draws a fresh environment.

Replica ``r`` of grid cell ``c`` uses ``derive_seed(master_seed, c, r)``;
that seed is split into an environment stream and a chain stream.  Results
therefore do not depend on the number of workers or on scheduling order.
"""

from __future__ import annotations

import csv
import io
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .estimator import DegenerateInputError, RecoveryScore, failed_score, kmeans2, score, sigma_hat_from_counts
from .model import DEFAULT_PARAMS, ModelParams, build_layout, sample_environment, validate_params
from .seeding import derive_seed
from .simulator import SimConfig, default_burn_in, simulate_counts

__all__ = [
    "ExperimentSpec",
    "CellResult",
    "SWEEPABLE",
    "CSV_COLUMNS",
    "default_workers",
    "run_replica",
    "run_cell",
    "run_heatmap",
    "run_sweep",
    "load_spec",
    "spec_from_dict",
    "write_csv",
    "cells_to_csv",
    "write_metadata",
]

THREADS_ENV = "MFCOMMUNITY_THREADS"

# public name -> ModelParams field
SWEEPABLE = {
    "N": "n_components",
    "n": "n_components",
    "n_components": "n_components",
    "r_plus": "r_plus",
    "beta": "beta",
    "lambda": "lam",
    "lam": "lam",
    "p": "p",
}

CSV_COLUMNS = ["N", "T", "r_plus", "beta", "lambda", "p", "replicas",
               "per_hat", "per_stderr", "mmp_hat", "mmp_std", "wall_time_s"]


def default_workers() -> int:
    env = os.environ.get(THREADS_ENV)
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


@dataclass(frozen=True)
class ExperimentSpec:
    base: ModelParams = DEFAULT_PARAMS
    t_grid: tuple[int, ...] = (10_000,)
    n_grid: tuple[int, ...] | None = None
    sweep: tuple[str, tuple[float, ...]] | None = None
    n_replicas: int = 1000
    master_seed: int = 0
    burn_in: int | None = None

    def __post_init__(self):
        if not self.t_grid:
            raise ValueError("t_grid must not be empty")
        if any(t < 2 for t in self.t_grid):
            raise ValueError("every T must be >= 2")
        if self.n_grid is not None and not self.n_grid:
            raise ValueError("n_grid must not be empty")
        if self.n_replicas < 1:
            raise ValueError("n_replicas must be >= 1")
        if self.sweep is not None:
            name, values = self.sweep
            if name not in SWEEPABLE:
                raise ValueError(f"unknown sweep parameter {name!r}; expected one of {sorted(SWEEPABLE)}")
            if not values:
                raise ValueError("sweep values must not be empty")


@dataclass
class CellResult:
    params: ModelParams
    t_samples: int
    per_hat: float
    per_stderr: float
    mmp_hat: float
    mmp_std: float
    n_replicas: int
    wall_time: float
    outcomes: list[RecoveryScore] = field(default_factory=list, repr=False)

    def row(self) -> dict:
        p = self.params
        return {
            "N": p.n_components, "T": self.t_samples, "r_plus": p.r_plus, "beta": p.beta,
            "lambda": p.lam, "p": p.p, "replicas": self.n_replicas,
            "per_hat": self.per_hat, "per_stderr": self.per_stderr,
            "mmp_hat": self.mmp_hat, "mmp_std": self.mmp_std, "wall_time_s": round(self.wall_time, 3),
        }


def run_replica(params: ModelParams, t_samples: int, replica_seed: int,
                burn_in: int | None = None) -> RecoveryScore:
    """Sample an environment, simulate, estimate and score one replica."""
    env_seed = derive_seed(replica_seed, 0)
    chain_seed = derive_seed(replica_seed, 1)
    layout = build_layout(params)
    env = sample_environment(params, layout, env_seed)
    stats = simulate_counts(env, SimConfig(t_samples, burn_in, chain_seed))
    try:
        _, labels, _ = kmeans2(sigma_hat_from_counts(stats))
    except DegenerateInputError:
        return failed_score(layout)
    return score(labels, layout)


def aggregate(params: ModelParams, t_samples: int, outcomes: list[RecoveryScore],
              wall_time: float = 0.0) -> CellResult:
    r = len(outcomes)
    exact = np.array([o.exact for o in outcomes], dtype=np.float64)
    frac = np.array([o.misclassified_fraction for o in outcomes], dtype=np.float64)
    per = float(exact.mean())
    return CellResult(
        params=params,
        t_samples=t_samples,
        per_hat=per,
        per_stderr=float(np.sqrt(per * (1 - per) / r)),
        mmp_hat=float(frac.mean()),
        mmp_std=float(frac.std()),
        n_replicas=r,
        wall_time=wall_time,
        outcomes=list(outcomes),
    )


def run_cell(params: ModelParams, t_samples: int, n_replicas: int, master_seed: int,
             cell_index: int = 0, workers: int | None = None, burn_in: int | None = None) -> CellResult:
    """Aggregate ``n_replicas`` independent replicas of one (params, T) cell."""
    if n_replicas < 1:
        raise ValueError("n_replicas must be >= 1")
    workers = workers or default_workers()
    seeds = [derive_seed(master_seed, cell_index, r) for r in range(n_replicas)]
    start = time.perf_counter()
    if workers == 1:
        outcomes = [run_replica(params, t_samples, s, burn_in) for s in seeds]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(lambda s: run_replica(params, t_samples, s, burn_in), seeds))
    return aggregate(params, t_samples, outcomes, time.perf_counter() - start)


def _cells(spec: ExperimentSpec, points: list[ModelParams], workers, progress) -> list[CellResult]:
    out = []
    idx = 0
    for prm in points:
        for t in spec.t_grid:
            cell = run_cell(prm, t, spec.n_replicas, spec.master_seed, idx, workers, spec.burn_in)
            out.append(cell)
            if progress:
                progress(cell)
            idx += 1
    return out


def run_heatmap(spec: ExperimentSpec, workers: int | None = None, progress=None) -> list[CellResult]:
    """Full (N, T) grid; rows ordered by N then T."""
    if spec.n_grid is None:
        raise ValueError("heatmap needs n_grid")
    points = [spec.base.replace(n_components=n) for n in spec.n_grid]
    return _cells(spec, points, workers, progress)


def run_sweep(spec: ExperimentSpec, workers: int | None = None, progress=None) -> list[CellResult]:
    """One row per (sweep value, T); other parameters stay at ``spec.base``."""
    if spec.sweep is None:
        raise ValueError("sweep spec missing")
    name, values = spec.sweep
    if name not in SWEEPABLE:
        raise ValueError(f"unknown sweep parameter {name!r}")
    key = SWEEPABLE[name]
    points = [spec.base.replace(**{key: int(v) if key == "n_components" else v}) for v in values]
    return _cells(spec, points, workers, progress)


# -- spec and output files -------------------------------------------------------


def spec_from_dict(d: dict) -> ExperimentSpec:
    base = dict(asdict(DEFAULT_PARAMS))
    for k, v in (d.get("base") or {}).items():
        if k not in SWEEPABLE:
            raise ValueError(f"unknown parameter {k!r} in base")
        base[SWEEPABLE[k]] = v
    t_grid = d.get("t_grid", d.get("T"))
    if t_grid is None:
        raise ValueError("spec needs t_grid")
    if isinstance(t_grid, int):
        t_grid = [t_grid]
    sweep = d.get("sweep")
    if sweep is not None:
        sweep = (sweep["parameter"], tuple(sweep["values"]))
    n_grid = d.get("n_grid")
    return ExperimentSpec(
        base=validate_params(**base),
        t_grid=tuple(int(t) for t in t_grid),
        n_grid=tuple(int(n) for n in n_grid) if n_grid is not None else None,
        sweep=sweep,
        n_replicas=int(d.get("n_replicas", 1000)),
        master_seed=int(d.get("master_seed", 0)),
        burn_in=d.get("burn_in"),
    )


def load_spec(path: str | Path) -> ExperimentSpec:
    return spec_from_dict(json.loads(Path(path).read_text()))


def cells_to_csv(cells: list[CellResult]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    w.writeheader()
    for c in cells:
        w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in c.row().items()})
    return buf.getvalue()


def write_csv(cells: list[CellResult], path: str | Path) -> None:
    Path(path).write_text(cells_to_csv(cells))


def write_metadata(spec: ExperimentSpec, cells: list[CellResult], path: str | Path) -> None:
    """Sidecar JSON with the experiment spec, seeding rule and burn-in actually used."""
    meta = {
        "spec": {
            "base": asdict(spec.base),
            "t_grid": list(spec.t_grid),
            "n_grid": list(spec.n_grid) if spec.n_grid else None,
            "sweep": {"parameter": spec.sweep[0], "values": list(spec.sweep[1])} if spec.sweep else None,
            "n_replicas": spec.n_replicas,
            "master_seed": spec.master_seed,
        },
        "seed_rule": "replica seed = derive_seed(master_seed, cell_index, replica); "
                     "environment seed = derive_seed(replica_seed, 0); chain seed = derive_seed(replica_seed, 1)",
        "burn_in": [
            {"N": c.params.n_components, "lambda": c.params.lam,
             "burn_in": spec.burn_in if spec.burn_in is not None
             else default_burn_in(c.params.n_components, c.params.lam)}
            for c in cells
        ],
    }
    Path(path).write_text(json.dumps(meta, indent=2) + "\n")
