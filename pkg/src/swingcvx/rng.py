"""Counter-based random substreams.

Every draw is addressed by ``(seed, stream, block)``: the Philox key is the
seed in the low 64 bits and ``(stream << 32) | block`` in the high bits, so
a block of paths always sees the same normals no matter which worker
produces it or in which order blocks are scheduled.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable

import numpy as np

BLOCK_SIZE = 1024
_MASK64 = (1 << 64) - 1

# stream tags
PATHS = 1
FORWARD = 2
TESTS = 3


def substream(seed: int, stream: int, block: int) -> np.random.Generator:
    if not (0 <= stream < 1 << 32 and 0 <= block < 1 << 32):
        raise ValueError("stream and block must fit in 32 bits")
    key = (int(seed) & _MASK64) | (((stream << 32) | block) << 64)
    return np.random.Generator(np.random.Philox(key=key))


def block_ranges(count: int, block_size: int = BLOCK_SIZE) -> list[tuple[int, int]]:
    return [(s, min(s + block_size, count)) for s in range(0, count, block_size)]


def normals(seed: int, stream: int, count: int, shape: tuple[int, ...] = (),
            block_size: int = BLOCK_SIZE) -> np.ndarray:
    """Standard normals of shape ``(count, *shape)`` assembled block by block."""
    out = np.empty((count,) + tuple(shape))
    for b, (s, e) in enumerate(block_ranges(count, block_size)):
        out[s:e] = substream(seed, stream, b).standard_normal((e - s,) + tuple(shape))
    return out


def map_blocks(func: Callable[[int, int, int], np.ndarray], count: int, workers: int = 1,
               block_size: int = BLOCK_SIZE) -> list:
    """Apply ``func(block, start, stop)`` to every block, in block order."""
    ranges = block_ranges(count, block_size)
    if workers <= 1 or len(ranges) == 1:
        return [func(b, s, e) for b, (s, e) in enumerate(ranges)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futs = [pool.submit(func, b, s, e) for b, (s, e) in enumerate(ranges)]
        return [f.result() for f in futs]
