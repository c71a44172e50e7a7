"""Seed derivation for reproducible (and order-free) parallel runs.

Every random stream in the package comes from a numpy ``SeedSequence``.
A child seed is derived as::

    seed_k = uint64(SeedSequence(entropy=master_seed, spawn_key=keys).generate_state(2))

so the stream for replica ``r`` of grid cell ``c`` depends only on
``(master_seed, c, r)`` and never on scheduling order.
"""

from __future__ import annotations

import numpy as np

__all__ = ["derive_seed", "make_rng", "split_rng"]


def derive_seed(master_seed: int, *keys: int) -> int:
    """Hash ``(master_seed, *keys)`` into a 64-bit seed."""
    if master_seed < 0 or any(k < 0 for k in keys):
        raise ValueError("seeds and keys must be non-negative integers")
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=tuple(int(k) for k in keys))
    lo, hi = ss.generate_state(2, dtype=np.uint32)
    return int(lo) | (int(hi) << 32)


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed))))


def split_rng(seed: int, n: int) -> list[np.random.Generator]:
    """``n`` independent generators spawned from one seed."""
    children = np.random.SeedSequence(int(seed)).spawn(n)
    return [np.random.Generator(np.random.PCG64(c)) for c in children]
