"""Counter-based random streams.

Every stream is a Philox generator keyed by a tuple of integers (seed,
stream id, block index, ...) through :class:`numpy.random.SeedSequence`, so
streams are independent of scheduling and can be recreated in any order.
"""
from __future__ import annotations

import numpy as np

# stream ids, kept distinct so that different consumers never share draws
STREAM_SDE = 1
STREAM_LAMPERTI = 2
STREAM_COUPLING = 3
STREAM_LEVY = 4
STREAM_RESTART = 5


def stream(seed: int, *keys: int) -> np.random.Generator:
    """Independent generator for the key tuple ``(seed, *keys)``."""
    if seed < 0 or seed >= 2**64:
        raise ValueError("seed must be a 64-bit unsigned integer")
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFF, int(seed) >> 32, *map(int, keys)])
    return np.random.Generator(np.random.Philox(ss))
