"""Fixed-point requantization and quantized tensors.

The requantization step maps an int32 accumulator to an int8 output code:

    out = clamp(((acc * M + 2**(30+s)) >> (31+s)) + zo, q_lo, q_hi)

with M in [2**30, 2**31), a signed shift s >= -30, and the shift performed
arithmetically in 64-bit. The add-then-shift performs a single half-up
rounding (ties toward +inf). The represented real ratio is M / 2**(31+s).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidRatioError, ValidationError

INT8_MIN = -128
INT8_MAX = 127


def derive_multiplier(r: float) -> tuple[int, int]:
    """Split a real ratio r in (0, 2] into (M, s) with M in [2**30, 2**31).

    M is round-to-nearest; a carry into 2**31 normalizes to (2**30, s - 1).
    Relative representation error is below 2**-30.
    """
    if not (r > 0.0 and r <= 2.0) or not math.isfinite(r):
        raise InvalidRatioError(f"requantization ratio must be in (0, 2], got {r!r}")
    frac, exp = math.frexp(r)  # r = frac * 2**exp, frac in [0.5, 1)
    m = int(math.floor(frac * (1 << 31) + 0.5))
    s = -exp
    if m == 1 << 31:
        m = 1 << 30
        s -= 1
    if s > 31:
        raise InvalidRatioError(f"ratio {r!r} too small to represent (shift {s} > 31)")
    return m, s


@dataclass(frozen=True)
class RequantParams:
    """Per-channel requantization: multiplier, shift, output offset, clamp."""

    M: int
    s: int
    zo: int
    q_lo: int = INT8_MIN
    q_hi: int = INT8_MAX

    def __post_init__(self):
        if not (1 << 30) <= self.M < (1 << 31):
            raise ValidationError(f"multiplier M={self.M} outside [2^30, 2^31)")
        # s <= 31 keeps acc*M + 2**(30+s) within int64 for int32 accumulators,
        # so the vectorized path is exact; ratios down to ~2**-32 remain usable.
        if not -30 <= self.s <= 31:
            raise ValidationError(f"shift s={self.s} outside [-30, 31]")
        if not INT8_MIN <= self.zo <= INT8_MAX:
            raise ValidationError(f"output zero point {self.zo} outside int8 range")
        if not (INT8_MIN <= self.q_lo <= self.q_hi <= INT8_MAX):
            raise ValidationError(
                f"clamp [{self.q_lo}, {self.q_hi}] invalid or outside int8 range"
            )

    @classmethod
    def from_ratio(cls, r: float, zo: int = 0, q_lo: int = INT8_MIN,
                   q_hi: int = INT8_MAX) -> "RequantParams":
        m, s = derive_multiplier(r)
        return cls(M=m, s=s, zo=zo, q_lo=q_lo, q_hi=q_hi)

    @property
    def ratio(self) -> float:
        return self.M / float(1 << (31 + self.s))


def requantize(acc: int, p: RequantParams) -> int:
    """Requantize one int32 accumulator. Monotone nondecreasing in acc."""
    v = ((int(acc) * p.M + (1 << (30 + p.s))) >> (31 + p.s)) + p.zo
    if v < p.q_lo:
        return p.q_lo
    if v > p.q_hi:
        return p.q_hi
    return v


def requantize_array(acc: np.ndarray, p: RequantParams) -> np.ndarray:
    """Vectorized requantize; acc is any integer array, result is int64."""
    v = (acc.astype(np.int64) * p.M + (1 << (30 + p.s))) >> (31 + p.s)
    return np.clip(v + p.zo, p.q_lo, p.q_hi)


@dataclass(frozen=True)
class QuantTensor:
    """int8 NHWC tensor with affine quantization parameters."""

    data: np.ndarray  # int8, shape (N, H, W, C)
    scale: float = 1.0
    zero_point: int = 0

    def __post_init__(self):
        if self.data.dtype != np.int8:
            raise ValidationError(f"tensor dtype must be int8, got {self.data.dtype}")
        if self.data.ndim != 4:
            raise ValidationError(f"tensor must be 4-d NHWC, got {self.data.ndim}-d")
        if any(d < 1 for d in self.data.shape):
            raise ValidationError(f"all dims must be >= 1, got {self.data.shape}")
        if not self.scale > 0:
            raise ValidationError(f"scale must be positive, got {self.scale}")
        if not INT8_MIN <= self.zero_point <= INT8_MAX:
            raise ValidationError(f"zero point {self.zero_point} outside int8 range")

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return tuple(self.data.shape)

    def with_quant(self, scale: float, zero_point: int) -> "QuantTensor":
        return QuantTensor(self.data, scale, zero_point)
