"""Hierarchical random streams for reproducible parallelism.

Every stochastic unit of work (replicate, inner replicate, bootstrap
resample) owns a stream derived from the run seed plus its integer path,
so results never depend on execution order or worker count.
"""

import numpy as np


def substream(seed: int, *path: int) -> np.random.Generator:
    """Generator for the stream addressed by (seed, path)."""
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=tuple(path)))


def subseed(seed: int, *path: int) -> int:
    """A derived 64-bit integer seed, for handing to nested engines."""
    hi, lo = np.random.SeedSequence(entropy=seed, spawn_key=tuple(path)).generate_state(2)
    return (int(hi) << 32) | int(lo)
