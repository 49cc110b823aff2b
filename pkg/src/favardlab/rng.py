"""Counter-based random streams.

Every random draw in the package comes from a Philox generator keyed by the
user seed plus a tuple of integer indices (experiment stage, chunk number,
...). A chunk of work therefore sees the same numbers no matter which thread
runs it or in what order.
"""
from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1


def stream(seed: int, *key: int) -> np.random.Generator:
    """Return the generator for ``(seed, *key)``."""
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    entropy = [int(seed) & MASK64, *(int(k) for k in key)]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def stratified_unit(rng: np.random.Generator, count: int, dim: int = 1) -> np.ndarray:
    """Stratified samples of the unit cube, shape ``(count, dim)``.

    In one dimension this is one jittered point per stratum of width
    ``1/count``. In two dimensions the strata form a ``k x k`` grid with
    ``k = floor(sqrt(count))``; any leftover samples are plain uniform.
    """
    if dim == 1:
        u = (np.arange(count) + rng.random(count)) / count
        return u[:, None]
    if dim == 2:
        k = int(np.floor(np.sqrt(count)))
        i, j = np.divmod(np.arange(k * k), k)
        grid = np.stack([(i + rng.random(k * k)) / k, (j + rng.random(k * k)) / k], axis=1)
        extra = rng.random((count - k * k, 2))
        return np.concatenate([grid, extra], axis=0)
    return rng.random((count, dim))
