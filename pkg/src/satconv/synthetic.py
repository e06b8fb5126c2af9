"""Deterministic synthetic model generation.

Every preset draws all parameters from a single SplitMix64 stream seeded by
the user. Draw order is fixed and documented: for each convolution-like layer
in chain order, first the weights channel-major (all taps of output channel 0,
then channel 1, ...), then one 16-bit bias per output channel. Requantization
ratios are chosen from the fan-in so that accumulators land in a controlled
band relative to the clamp rails; the `alpha` knob below scales that band
(small alpha => rails sit close to the accumulator distribution => frequent
saturation).
"""

from __future__ import annotations

import math

import numpy as np

from .errors import ValidationError
from .model import LayerSpec, Model, Shape3, out_size
from .quant import RequantParams, derive_multiplier
from .rng import SplitMix64

PRESETS = ("tiny", "har-like", "gmp-like", "mnist-like", "sat-heavy")

# Std of a uniform int8 draw; accumulator std over m taps is roughly
# _UNIF_STD^2 * sqrt(m) for centered activations.
_UNIF_STD = 255.0 / math.sqrt(12.0)


def _ratio_for(m: int, alpha: float, channel: int, n_channels: int) -> float:
    """Requant ratio putting the clamp rails ~alpha accumulator-sigmas out."""
    sigma = _UNIF_STD * _UNIF_STD * math.sqrt(m)
    r = 127.0 / (alpha * sigma)
    if n_channels > 1:
        r *= 0.9 + 0.2 * channel / (n_channels - 1)
    return min(r, 2.0)


def _requant_row(m: int, alpha: float, channel: int, n_channels: int,
                 zo: int, relu: bool) -> RequantParams:
    r = _ratio_for(m, alpha, channel, n_channels)
    mult, shift = derive_multiplier(r)
    q_lo = max(-128, zo) if relu else -128
    return RequantParams(M=mult, s=shift, zo=zo, q_lo=q_lo, q_hi=127)


def _conv_like(rng: SplitMix64, kind: str, in_shape: Shape3, in_scale: float, in_zp: int,
               kernel: tuple[int, int], stride: int, padding: str, out_channels: int,
               alpha: float, zo: int, relu: bool) -> LayerSpec:
    kh, kw = kernel
    h, w, c = in_shape
    if kind == "conv2d":
        m, n_out = kh * kw * c, out_channels
        oshape = (out_size(h, kh, stride, padding), out_size(w, kw, stride, padding), n_out)
    elif kind == "dwconv2d":
        m, n_out = kh * kw, c
        oshape = (out_size(h, kh, stride, padding), out_size(w, kw, stride, padding), c)
    elif kind == "fully_connected":
        m, n_out = h * w * c, out_channels
        kh = kw = 1
        oshape = (1, 1, n_out)
    else:
        raise ValidationError(f"not a parameterized kind: {kind}")
    weights = rng.int8_array(n_out * m).reshape(n_out, m)
    bias = rng.int16_array(n_out).astype(np.int32)
    requant = [_requant_row(m, alpha, ch, n_out, zo, relu) for ch in range(n_out)]
    # Nominal float scale consistent with the chosen ratio of channel 0.
    out_scale = in_scale / (128.0 * requant[0].ratio)
    return LayerSpec(kind=kind, in_shape=in_shape, out_shape=oshape,
                     in_scale=in_scale, in_zp=in_zp, out_scale=out_scale, out_zp=zo,
                     kernel_h=kh, kernel_w=kw, stride=stride, padding=padding,
                     weights=weights, bias=bias, requant=requant)


def _pool(kind: str, in_shape: Shape3, in_scale: float, in_zp: int,
          kernel: tuple[int, int] = (0, 0), stride: int = 1) -> LayerSpec:
    h, w, c = in_shape
    if kind == "reduce_max":
        kh, kw, stride = h, w, 1
        oshape = (1, 1, c)
    else:
        kh, kw = kernel
        oshape = (out_size(h, kh, stride, "valid"), out_size(w, kw, stride, "valid"), c)
    return LayerSpec(kind=kind, in_shape=in_shape, out_shape=oshape,
                     in_scale=in_scale, in_zp=in_zp, out_scale=in_scale, out_zp=in_zp,
                     kernel_h=kh, kernel_w=kw, stride=stride, padding="valid")


def _chain(name: str, preset: str, seed: int, input_shape: Shape3,
           input_scale: float, input_zp: int, steps) -> Model:
    """Run `steps` (callables taking (rng, shape, scale, zp) -> LayerSpec)."""
    rng = SplitMix64(seed)
    layers: list[LayerSpec] = []
    shape, scale, zp = input_shape, input_scale, input_zp
    for step in steps:
        layer = step(rng, shape, scale, zp)
        layers.append(layer)
        shape, scale, zp = layer.out_shape, layer.out_scale, layer.out_zp
    model = Model(name=name, input_shape=(1,) + input_shape, input_scale=input_scale,
                  input_zp=input_zp, layers=layers, preset=preset, seed=seed)
    model.validate()
    return model


def _conv(kind, kernel, stride, padding, out_channels, alpha, zo, relu):
    def step(rng, shape, scale, zp):
        return _conv_like(rng, kind, shape, scale, zp, kernel, stride, padding,
                          out_channels, alpha, zo, relu)
    return step


def _mp(kernel, stride):
    return lambda rng, shape, scale, zp: _pool("maxpool", shape, scale, zp, kernel, stride)


def _rm():
    return lambda rng, shape, scale, zp: _pool("reduce_max", shape, scale, zp)


def gen_synthetic(preset: str, seed: int = 0) -> Model:
    """Build one of the named presets; fully determined by (preset, seed)."""
    name = f"{preset}-s{seed}"
    if preset == "tiny":
        return _chain(name, preset, seed, (8, 8, 1), 0.05, 0, [
            _conv("conv2d", (3, 3), 1, "valid", 4, 2.5, -128, True),
            _mp((2, 2), 2),
            _conv("fully_connected", (1, 1), 1, "valid", 10, 3.0, 0, False),
        ])
    if preset == "har-like":
        return _chain(name, preset, seed, (24, 3, 1), 0.02, 3, [
            _conv("conv2d", (5, 1), 1, "valid", 8, 2.5, -128, True),
            _mp((2, 1), 2),
            _conv("fully_connected", (1, 1), 1, "valid", 32, 2.5, -128, True),
            _conv("fully_connected", (1, 1), 1, "valid", 6, 3.0, 0, False),
        ])
    if preset == "gmp-like":
        return _chain(name, preset, seed, (24, 3, 1), 0.02, -5, [
            _conv("conv2d", (3, 1), 1, "valid", 8, 2.5, -128, True),
            _conv("conv2d", (3, 3), 1, "valid", 12, 1.2, 0, False),
            _rm(),
        ])
    if preset == "mnist-like":
        return _chain(name, preset, seed, (12, 12, 1), 1.0 / 255.0, -128, [
            _conv("conv2d", (3, 3), 2, "same", 8, 2.5, -128, True),
            _conv("dwconv2d", (3, 3), 1, "same", 0, 2.0, -128, True),
            _conv("conv2d", (1, 1), 1, "valid", 16, 2.5, -128, True),
            _mp((2, 2), 2),
            _conv("fully_connected", (1, 1), 1, "valid", 10, 3.0, 0, False),
        ])
    if preset == "sat-heavy":
        # Bottom-anchored zero points make the centered input range one-sided
        # ([0, 255]), which halves the deviation envelope; together with the
        # tight alphas this drives most neurons onto a clamp rail.
        return _chain(name, preset, seed, (8, 8, 2), 0.05, -128, [
            _conv("conv2d", (3, 3), 1, "valid", 8, 0.35, -128, True),
            _conv("conv2d", (2, 2), 1, "valid", 8, 0.3, -128, True),
            _conv("fully_connected", (1, 1), 1, "valid", 10, 0.4, 0, False),
        ])
    raise ValidationError(f"unknown preset {preset!r}; choose from {', '.join(PRESETS)}")


def gen_inputs(model: Model, n: int, seed: int) -> np.ndarray:
    """n int8 input tensors, shape (n,) + input_shape[1:], from one stream."""
    rng = SplitMix64(seed)
    size = n * int(np.prod(model.input_shape))
    flat = rng.int8_array(size)
    return flat.reshape((n,) + tuple(model.input_shape[1:]))
