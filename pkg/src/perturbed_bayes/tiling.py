"""Fixed-tile fan-out for per-particle work.

Tiles have a fixed size independent of the worker count and every tile
writes into its own pre-assigned output slice, so results are bit-identical
whatever the number of threads.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable

import numpy as np

TILE = 2048


def tile_slices(n: int, tile: int = TILE) -> list[slice]:
    return [slice(i, min(i + tile, n)) for i in range(0, n, tile)]


class TileRunner:
    """Evaluate ``fn`` on row tiles of an array, optionally on a thread pool."""

    def __init__(self, workers: int = 1, tile: int = TILE):
        self.workers = max(1, int(workers))
        self.tile = int(tile)
        self._pool = None

    def map_rows(self, fn: Callable[[np.ndarray], np.ndarray], rows: np.ndarray,
                 out: np.ndarray) -> np.ndarray:
        slices = tile_slices(len(rows), self.tile)
        if self.workers == 1 or len(slices) == 1:
            for sl in slices:
                out[sl] = fn(rows[sl])
            return out
        if self._pool is None:
            self._pool = ThreadPoolExecutor(self.workers)

        def work(sl):
            out[sl] = fn(rows[sl])

        # list() forces completion: the barrier before anyone reads ``out``.
        list(self._pool.map(work, slices))
        return out

    def close(self):
        if self._pool is not None:
            self._pool.shutdown()
            self._pool = None

    def __getstate__(self):
        return {"workers": self.workers, "tile": self.tile}

    def __setstate__(self, state):
        self.__init__(**state)
