"""Fixed-point requantization: known answers, monotonicity, value bounds."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from satconv.errors import InvalidRatioError, ValidationError
from satconv.quant import (QuantTensor, RequantParams, derive_multiplier,
                           requantize, requantize_array)

from conftest import identity_requant


# ---------------------------------------------------------------------------
# derive_multiplier


def test_multiplier_exact_dyadics():
    assert derive_multiplier(0.5) == (1 << 30, 0)
    assert derive_multiplier(1.0) == (1 << 30, -1)
    assert derive_multiplier(0.75) == (1610612736, 0)  # 3 * 2^29


def test_multiplier_rejects_bad_ratios():
    for r in (0.0, -1.0, 2.0000001, float("nan"), float("inf")):
        with pytest.raises(InvalidRatioError):
            derive_multiplier(r)
    # representable floor: shifts past 31 would overflow the int64 path
    with pytest.raises(InvalidRatioError):
        derive_multiplier(2.0**-33)


def test_multiplier_roundtrip_error():
    rng = np.random.default_rng(1)
    for r in rng.uniform(1e-6, 2.0, size=2000):
        m, s = derive_multiplier(float(r))
        assert (1 << 30) <= m < (1 << 31)
        assert abs(m / 2.0 ** (31 + s) - r) / r < 2.0**-30


def test_multiplier_carry_normalizes():
    # a ratio just below a power of two rounds up to 2^31 and must renormalize
    r = 1.0 - 2.0**-40
    m, s = derive_multiplier(r)
    assert (m, s) == (1 << 30, -1)


# ---------------------------------------------------------------------------
# requantize


def test_requantize_known_answers():
    half = RequantParams.from_ratio(0.5)
    assert requantize(100, half) == 50
    assert requantize(-101, half) == -50  # half-up: -50.5 rounds toward +inf
    assert requantize(1000, half) == 127
    ident3 = identity_requant(zo=3)
    assert requantize(5, ident3) == 8


def test_requantize_half_up_rounding():
    half = RequantParams.from_ratio(0.5)
    assert requantize(101, half) == 51   # 50.5 -> 51
    assert requantize(99, half) == 50    # 49.5 -> 50
    assert requantize(-99, half) == -49  # -49.5 -> -49


@settings(max_examples=200, deadline=None)
@given(st.integers(-(2**31), 2**31 - 1), st.floats(0.01, 2.0), st.integers(-20, 20))
def test_requantize_monotone(acc, ratio, zo):
    p = RequantParams.from_ratio(ratio, zo=zo)
    assert requantize(acc, p) <= requantize(min(acc + 1, 2**31 - 1), p)


def test_requantize_window_scan_monotone(rng):
    for _ in range(50):
        p = RequantParams.from_ratio(float(rng.uniform(0.05, 2.0)),
                                     zo=int(rng.integers(-128, 128)))
        accs = np.arange(-2048, 2049)
        outs = requantize_array(accs, p)
        assert np.all(np.diff(outs) >= 0)


def test_array_matches_scalar(rng):
    accs = np.concatenate([
        rng.integers(-(2**31), 2**31, size=500),
        np.array([-(2**31), 2**31 - 1, 0, -1, 1]),
    ])
    for ratio in (0.5, 1.0, 0.37, 2.0, 2.0**-20):
        p = RequantParams.from_ratio(ratio, zo=5, q_lo=-100, q_hi=100)
        vec = requantize_array(accs, p)
        scalar = [requantize(int(a), p) for a in accs]
        assert vec.tolist() == scalar


def test_requant_params_validation():
    with pytest.raises(ValidationError):
        RequantParams(M=(1 << 30) - 1, s=0, zo=0)
    with pytest.raises(ValidationError):
        RequantParams(M=1 << 31, s=0, zo=0)
    with pytest.raises(ValidationError):
        RequantParams(M=1 << 30, s=-31, zo=0)
    with pytest.raises(ValidationError):
        RequantParams(M=1 << 30, s=32, zo=0)
    with pytest.raises(ValidationError):
        RequantParams(M=1 << 30, s=0, zo=200)
    with pytest.raises(ValidationError):
        RequantParams(M=1 << 30, s=0, zo=0, q_lo=10, q_hi=5)


# ---------------------------------------------------------------------------
# QuantTensor


def test_tensor_validation():
    ok = QuantTensor(data=np.zeros((1, 2, 2, 1), np.int8), scale=0.1, zero_point=3)
    assert ok.shape == (1, 2, 2, 1)
    with pytest.raises(ValidationError):
        QuantTensor(data=np.zeros((1, 2, 2, 1), np.int32))
    with pytest.raises(ValidationError):
        QuantTensor(data=np.zeros((2, 2, 1), np.int8))
    with pytest.raises(ValidationError):
        QuantTensor(data=np.zeros((1, 2, 2, 1), np.int8), scale=0.0)
    with pytest.raises(ValidationError):
        QuantTensor(data=np.zeros((1, 2, 2, 1), np.int8), zero_point=300)
