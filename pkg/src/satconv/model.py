"""Layer and model descriptions.

A model is a single chain of layers over int8 NHWC tensors. Convolution-like
layers (conv2d, dwconv2d, fully_connected) carry int8 weights stored
channel-major, an int32 bias per output channel, and per-output-channel
requantization parameters whose output offset and clamp are uniform across
channels (per-tensor activation quantization). Pooling and reduce-max layers
pass quantization parameters through unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .quant import INT8_MAX, INT8_MIN, QuantTensor, RequantParams

CONV_KINDS = ("conv2d", "dwconv2d", "fully_connected")
ALL_KINDS = CONV_KINDS + ("maxpool", "reduce_max")

Shape3 = tuple[int, int, int]  # (H, W, C), batch is always 1


def pad_amounts(in_size: int, kernel: int, stride: int, padding: str) -> tuple[int, int]:
    """(before, after) padding for one spatial dim."""
    if padding == "valid":
        return 0, 0
    out = -(-in_size // stride)  # ceil
    total = max((out - 1) * stride + kernel - in_size, 0)
    before = total // 2
    return before, total - before


def out_size(in_size: int, kernel: int, stride: int, padding: str) -> int:
    if padding == "same":
        return -(-in_size // stride)
    if in_size < kernel:
        raise ValidationError(f"input size {in_size} smaller than kernel {kernel} with valid padding")
    return (in_size - kernel) // stride + 1


@dataclass
class LayerSpec:
    """One layer of the chain; see module docstring for conventions."""

    kind: str
    in_shape: Shape3
    out_shape: Shape3
    in_scale: float
    in_zp: int
    out_scale: float
    out_zp: int
    kernel_h: int = 1
    kernel_w: int = 1
    stride: int = 1
    padding: str = "valid"
    weights: np.ndarray | None = None       # int8, (out_channels, m)
    bias: np.ndarray | None = None          # int32, (out_channels,)
    requant: list[RequantParams] = field(default_factory=list)

    @property
    def out_channels(self) -> int:
        return self.out_shape[2]

    @property
    def m(self) -> int:
        """Accumulation length per output neuron (conv-like layers only)."""
        if self.kind == "conv2d":
            return self.kernel_h * self.kernel_w * self.in_shape[2]
        if self.kind == "dwconv2d":
            return self.kernel_h * self.kernel_w
        if self.kind == "fully_connected":
            h, w, c = self.in_shape
            return h * w * c
        raise ValidationError(f"layer kind {self.kind} has no accumulation length")

    def expected_out_shape(self) -> Shape3:
        h, w, c = self.in_shape
        if self.kind in ("conv2d", "dwconv2d"):
            oh = out_size(h, self.kernel_h, self.stride, self.padding)
            ow = out_size(w, self.kernel_w, self.stride, self.padding)
            oc = c if self.kind == "dwconv2d" else self.out_channels
            return (oh, ow, oc)
        if self.kind == "fully_connected":
            return (1, 1, self.out_channels)
        if self.kind == "maxpool":
            oh = out_size(h, self.kernel_h, self.stride, self.padding)
            ow = out_size(w, self.kernel_w, self.stride, self.padding)
            return (oh, ow, c)
        if self.kind == "reduce_max":
            return (1, 1, c)
        raise ValidationError(f"unknown layer kind {self.kind!r}")

    def validate(self, index: int) -> None:
        def fail(fieldname: str, msg: str):
            raise ValidationError(f"layer {index} ({self.kind}): {fieldname}: {msg}")

        if self.kind not in ALL_KINDS:
            fail("kind", f"unknown kind {self.kind!r}")
        if self.padding not in ("valid", "same"):
            fail("padding", f"must be 'valid' or 'same', got {self.padding!r}")
        if self.stride < 1:
            fail("stride", f"must be >= 1, got {self.stride}")
        if not self.in_scale > 0:
            fail("in_scale", "must be positive")
        if not self.out_scale > 0:
            fail("out_scale", "must be positive")
        for name, zp in (("in_zp", self.in_zp), ("out_zp", self.out_zp)):
            if not INT8_MIN <= zp <= INT8_MAX:
                fail(name, f"{zp} outside int8 range")
        if self.expected_out_shape() != tuple(self.out_shape):
            fail("out_shape", f"got {self.out_shape}, geometry implies {self.expected_out_shape()}")

        if self.kind in CONV_KINDS:
            n_out, m = self.out_channels, self.m
            if self.weights is None or self.weights.shape != (n_out, m):
                fail("weights", f"expected int8 array of shape {(n_out, m)}")
            if self.weights.dtype != np.int8:
                fail("weights", f"dtype must be int8, got {self.weights.dtype}")
            if self.bias is None or self.bias.shape != (n_out,):
                fail("bias", f"expected int32 array of shape {(n_out,)}")
            if self.bias.dtype != np.int32:
                fail("bias", f"dtype must be int32, got {self.bias.dtype}")
            if len(self.requant) != n_out:
                fail("requant", f"expected {n_out} entries, got {len(self.requant)}")
            zos = {p.zo for p in self.requant}
            clamps = {(p.q_lo, p.q_hi) for p in self.requant}
            if len(zos) != 1 or len(clamps) != 1:
                fail("requant", "zo and clamp must be uniform across channels")
            if self.requant[0].zo != self.out_zp:
                fail("out_zp", f"{self.out_zp} != requant zo {self.requant[0].zo}")
        else:
            if self.weights is not None or self.bias is not None or self.requant:
                fail("weights", f"{self.kind} layers carry no parameters")
            if (self.out_scale, self.out_zp) != (self.in_scale, self.in_zp):
                fail("out_zp", "pooling layers must pass quantization through")
            if self.kind == "maxpool" and self.padding != "valid":
                fail("padding", "maxpool supports valid padding only")
            if self.kind == "reduce_max":
                if (self.kernel_h, self.kernel_w) != (self.in_shape[0], self.in_shape[1]):
                    fail("kernel_h", "reduce_max window must cover the full spatial extent")

    @property
    def clamp(self) -> tuple[int, int]:
        p = self.requant[0]
        return p.q_lo, p.q_hi


@dataclass
class Model:
    """Ordered single-chain layer list with one input and one output."""

    name: str
    input_shape: tuple[int, int, int, int]  # (1, H, W, C)
    input_scale: float
    input_zp: int
    layers: list[LayerSpec]
    preset: str = ""
    seed: int = 0

    def validate(self) -> None:
        if len(self.input_shape) != 4 or self.input_shape[0] != 1:
            raise ValidationError(f"input shape must be (1, H, W, C), got {self.input_shape}")
        if not self.layers:
            raise ValidationError("model has no layers")
        if not self.input_scale > 0:
            raise ValidationError("input: scale: must be positive")
        cur_shape = tuple(self.input_shape[1:])
        cur_scale, cur_zp = self.input_scale, self.input_zp
        for i, layer in enumerate(self.layers):
            if tuple(layer.in_shape) != cur_shape:
                raise ValidationError(
                    f"layer {i} ({layer.kind}): in_shape: got {layer.in_shape}, previous layer emits {cur_shape}")
            if layer.in_scale != cur_scale or layer.in_zp != cur_zp:
                raise ValidationError(
                    f"layer {i} ({layer.kind}): in_scale/in_zp: do not match previous layer output")
            layer.validate(i)
            cur_shape = tuple(layer.out_shape)
            cur_scale, cur_zp = layer.out_scale, layer.out_zp

    @property
    def output_shape(self) -> tuple[int, int, int, int]:
        h, w, c = self.layers[-1].out_shape
        return (1, h, w, c)

    def conv_layer_indices(self) -> list[int]:
        return [i for i, l in enumerate(self.layers) if l.kind in CONV_KINDS]

    def check_input(self, t: QuantTensor) -> None:
        if t.shape != tuple(self.input_shape):
            raise ValidationError(f"input tensor shape {t.shape} != model input {self.input_shape}")

    def structurally_equal(self, other: "Model") -> bool:
        if (self.name, self.preset, self.seed) != (other.name, other.preset, other.seed):
            return False
        if (self.input_shape, self.input_scale, self.input_zp) != (
                other.input_shape, other.input_scale, other.input_zp):
            return False
        if len(self.layers) != len(other.layers):
            return False
        for a, b in zip(self.layers, other.layers):
            scalars_a = (a.kind, tuple(a.in_shape), tuple(a.out_shape), a.in_scale, a.in_zp,
                         a.out_scale, a.out_zp, a.kernel_h, a.kernel_w, a.stride, a.padding)
            scalars_b = (b.kind, tuple(b.in_shape), tuple(b.out_shape), b.in_scale, b.in_zp,
                         b.out_scale, b.out_zp, b.kernel_h, b.kernel_w, b.stride, b.padding)
            if scalars_a != scalars_b or a.requant != b.requant:
                return False
            for wa, wb in ((a.weights, b.weights), (a.bias, b.bias)):
                if (wa is None) != (wb is None):
                    return False
                if wa is not None and not np.array_equal(wa, wb):
                    return False
        return True
