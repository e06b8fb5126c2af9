"""Deterministic cross-platform random stream (SplitMix64).

Every synthetic artifact in this package (model weights, biases, generated
input tensors) is drawn from this stream so that identical (preset, seed)
pairs yield byte-identical files on any platform.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


class SplitMix64:
    """SplitMix64 generator; state advances by the golden-ratio increment."""

    def __init__(self, seed: int):
        self._state = seed & _MASK64

    def next_u64(self) -> int:
        self._state = (self._state + _GAMMA) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * _MIX1) & _MASK64
        z = ((z ^ (z >> 27)) * _MIX2) & _MASK64
        return (z ^ (z >> 31)) & _MASK64

    def next_i8(self) -> int:
        """Top byte of the next u64 as a signed 8-bit value."""
        top = self.next_u64() >> 56
        return top - 256 if top >= 128 else top

    def next_i16(self) -> int:
        """Top 16 bits of the next u64 as a signed 16-bit value."""
        top = self.next_u64() >> 48
        return top - 65536 if top >= 32768 else top

    def int8_array(self, n: int) -> np.ndarray:
        """n signed bytes, one u64 draw per byte."""
        return np.array([self.next_i8() for _ in range(n)], dtype=np.int8)

    def int16_array(self, n: int) -> np.ndarray:
        return np.array([self.next_i16() for _ in range(n)], dtype=np.int16)
