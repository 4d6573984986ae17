"""Deterministic random substreams and order-independent reductions.

Every Monte-Carlo trial block draws from its own generator, derived from the
scenario seed and a tuple of integer keys. Results therefore do not depend on
how blocks are scheduled, and sums are taken with ``math.fsum``.
"""
from __future__ import annotations

import math

import numpy as np

BLOCK = 4096


def substream(seed: int, *keys: int) -> np.random.Generator:
    """Generator for the substream (seed, keys...)."""
    if seed < 0:
        raise ValueError("seeds must be non-negative")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))))


def blocks(n: int, block: int = BLOCK):
    """Yield (block_index, start, stop) covering range(n)."""
    for idx, start in enumerate(range(0, n, block)):
        yield idx, start, min(start + block, n)


def fsum(values) -> float:
    return math.fsum(np.asarray(values, dtype=float).ravel().tolist())


def mean_and_stderr(values):
    """Sample mean and its standard error, using compensated sums."""
    x = np.asarray(values, dtype=float).ravel()
    n = x.size
    if n == 0:
        return math.nan, math.nan
    mean = fsum(x) / n
    if n == 1:
        return mean, 0.0
    var = fsum((x - mean) ** 2) / (n - 1)
    return mean, math.sqrt(var / n)
