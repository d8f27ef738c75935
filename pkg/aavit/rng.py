"""SplitMix64: the documented 64-bit generator behind every seeded decision.

The generator is counter based: output ``i`` (0-based) of a stream seeded
with ``s`` is ``mix64(s + (i + 1) * GAMMA mod 2**64)``, where

    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB
    z =  z ^ (z >> 31)

all modulo 2**64. That makes the sequence trivially reproducible in any
language, and lets us draw long runs as one vectorised numpy call.

Derived values:
  * uniform float in [0, 1): ``(u >> 11) * 2**-53``
  * normal: Box-Muller over consecutive uniform pairs (cosine branch)
  * permutation of n items: Fisher-Yates from the top, swap index
    ``u mod (i + 1)`` for i = n-1 .. 1
"""
import zlib
from typing import List

import numpy as np

MASK64 = (1 << 64) - 1
GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


def mix64(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * _MIX1) & MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & MASK64
    return z ^ (z >> 31)


def _mix64_array(z: np.ndarray) -> np.ndarray:
    # uint64 array arithmetic wraps modulo 2**64
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
    return z ^ (z >> np.uint64(31))


def stream_seed(seed: int, label: str) -> int:
    """Seed of an independent sub-stream named by ``label``."""
    return mix64((seed & MASK64) ^ (zlib.crc32(label.encode("utf-8")) * GAMMA))


class SplitMix64:
    def __init__(self, seed: int):
        self.seed = seed & MASK64
        self.counter = 0

    @classmethod
    def for_stream(cls, seed: int, label: str) -> "SplitMix64":
        return cls(stream_seed(seed, label))

    def next_u64(self) -> int:
        self.counter += 1
        return mix64(self.seed + self.counter * GAMMA)

    def u64s(self, count: int) -> np.ndarray:
        steps = np.arange(self.counter + 1, self.counter + count + 1, dtype=np.uint64)
        self.counter += count
        with np.errstate(over="ignore"):
            states = np.uint64(self.seed) + steps * np.uint64(GAMMA)
            return _mix64_array(states)

    def uniform(self, shape) -> np.ndarray:
        count = int(np.prod(shape, dtype=np.int64))
        values = (self.u64s(count) >> np.uint64(11)).astype(np.float64) * 2.0 ** -53
        return values.reshape(shape)

    def normal(self, shape, std: float = 1.0) -> np.ndarray:
        count = int(np.prod(shape, dtype=np.int64))
        u = self.uniform((count, 2))
        radius = np.sqrt(-2.0 * np.log1p(-u[:, 0]))
        return (std * radius * np.cos(2.0 * np.pi * u[:, 1])).reshape(shape)

    def permutation(self, n: int) -> List[int]:
        order = list(range(n))
        for i in range(n - 1, 0, -1):
            j = self.next_u64() % (i + 1)
            order[i], order[j] = order[j], order[i]
        return order
