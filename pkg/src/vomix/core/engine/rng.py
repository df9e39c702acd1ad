"""SplitMix64 generator.

Vectorized: the i-th output of a block is ``mix(state + i * GOLDEN)``, which is
exactly what repeated scalar calls would produce, so results are identical on
every platform and independent of block sizes.
"""

import numpy as np
from numpy.typing import NDArray

MASK64 = (1 << 64) - 1

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
MUL1 = np.uint64(0xBF58476D1CE4E5B9)
MUL2 = np.uint64(0x94D049BB133111EB)

INIT_LOW = -0.02
INIT_HIGH = 0.02


class SplitMix64:
    """Deterministic 64-bit generator seeded with any Python integer."""

    def __init__(self, seed: int) -> None:
        self._state = np.uint64(seed & MASK64)

    @property
    def state(self) -> int:
        return int(self._state)

    def next_u64(self, count: int) -> NDArray[np.uint64]:
        """Return the next ``count`` raw 64-bit outputs."""
        with np.errstate(over="ignore"):
            z = np.arange(1, count + 1, dtype=np.uint64) * GOLDEN + self._state
            z = (z ^ (z >> np.uint64(30))) * MUL1
            z = (z ^ (z >> np.uint64(27))) * MUL2
            z = z ^ (z >> np.uint64(31))
            self._state = self._state + GOLDEN * np.uint64(count)
        return z

    def uniform(self, count: int) -> NDArray[np.float64]:
        """Uniform floats in [0, 1) built from the top 24 bits of each output."""
        top = self.next_u64(count) >> np.uint64(40)
        return top.astype(np.float64) / float(1 << 24)

    def uniform_range(self, count: int, low: float, high: float) -> NDArray[np.float32]:
        return (low + (high - low) * self.uniform(count)).astype(np.float32)

    def init_values(self, shape: tuple[int, ...]) -> NDArray[np.float32]:
        """Weight-init values in [-0.02, 0.02), filled row-major."""
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        return self.uniform_range(count, INIT_LOW, INIT_HIGH).reshape(shape)
