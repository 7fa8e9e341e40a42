"""xoshiro256++ stream seeded through splitmix64.

The stream is pinned so that random instances are reproducible from a seed
in any language: each uniform double takes the top 53 bits of the next
64-bit output.
"""

import math
from typing import List

MASK64 = (1 << 64) - 1


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & MASK64


def splitmix64(state: int) -> tuple:
    """One splitmix64 step: returns (new_state, output)."""
    state = (state + 0x9E3779B97F4A7C15) & MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return state, z ^ (z >> 31)


def substream_seed(seed: int, index: int) -> int:
    """Seed of the independent stream for work item `index`."""
    _, out = splitmix64((int(seed) ^ int(index)) & MASK64)
    return out


class RngStream:
    """xoshiro256++ generator with a draw counter."""

    def __init__(self, seed: int):
        self.seed = int(seed) & MASK64
        state = self.seed
        words: List[int] = []
        for _ in range(4):
            state, out = splitmix64(state)
            words.append(out)
        self._s = words
        self.position = 0

    def next_u64(self) -> int:
        s = self._s
        result = (_rotl((s[0] + s[3]) & MASK64, 23) + s[0]) & MASK64
        t = (s[1] << 17) & MASK64
        s[2] ^= s[0]
        s[3] ^= s[1]
        s[1] ^= s[2]
        s[0] ^= s[3]
        s[2] ^= t
        s[3] = _rotl(s[3], 45)
        self.position += 1
        return result

    def random(self) -> float:
        """Uniform double in [0, 1)."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def uniform(self, low: float, high: float) -> float:
        """Uniform double in [low, high)."""
        value = low + (high - low) * self.random()
        # rounding can land on the open end
        return value if value < high else math.nextafter(high, low)

    def uniforms(self, low: float, high: float, count: int) -> List[float]:
        return [self.uniform(low, high) for _ in range(count)]
