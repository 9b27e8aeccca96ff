"""Counter-based random streams.

Every random draw in the package comes from a generator addressed by a
tuple of non-negative integers (master seed, then a key path such as
``(path_index, driver_index, chunk_index)``).  Streams are derived by
hashing the key through :class:`numpy.random.SeedSequence` into a Philox
key, so the numbers attached to a key never depend on which other keys
were consumed before, or on thread scheduling.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Top-level key namespaces; keeps families of streams disjoint.
DRIVER = 1
ENSEMBLE = 2
GW = 3
TESTING = 99


@dataclass(frozen=True)
class StreamKey:
    """Address of a family of independent streams."""

    seed: int
    path: tuple[int, ...] = ()

    def child(self, *more: int) -> "StreamKey":
        return StreamKey(self.seed, self.path + tuple(int(k) for k in more))

    def generator(self, *more: int) -> np.random.Generator:
        key = self.path + tuple(int(k) for k in more)
        if any(k < 0 for k in key):
            raise ValueError(f"stream key components must be non-negative, got {key}")
        ss = np.random.SeedSequence(int(self.seed), spawn_key=key)
        return np.random.Generator(np.random.Philox(ss))


def stream(seed: int, *key: int) -> np.random.Generator:
    """Generator for ``key`` under master ``seed``."""
    return StreamKey(int(seed)).generator(*key)
