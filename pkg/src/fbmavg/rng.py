"""Counter-based random streams.

Every stream is keyed by ``(seed, *keys)`` so that a Monte Carlo replica
draws the same numbers no matter how the work is split between workers.
"""
from __future__ import annotations

import numpy as np

# stream labels, kept stable so that stored runs stay reproducible
FBM = 1
WIENER = 2
FAST = 3
CHAIN = 4
INNER = 5
MISC = 6


def stream(seed: int, *keys: int) -> np.random.Generator:
    """Return an independent Philox generator for the key tuple."""
    ss = np.random.SeedSequence(int(seed) & (2**64 - 1), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.Philox(ss))


def normals(seed: int, keys: tuple[int, ...], index: np.ndarray | range, shape: tuple[int, ...]) -> np.ndarray:
    """Stack ``standard_normal(shape)`` draws from one stream per index."""
    out = np.empty((len(index),) + tuple(shape))
    for row, i in enumerate(index):
        out[row] = stream(seed, *keys, int(i)).standard_normal(shape)
    return out
