"""Reference integer kernels.

These are the plain, always-run-everything implementations every other
execution path must match bit for bit. The patch matrix holds raw int8
values (zero point not yet subtracted); padding cells hold the input zero
point, so centering maps them to exactly zero. Patch columns are ordered
(ky, kx, channel) row-major, matching the channel-major weight layout.
"""

from __future__ import annotations

import numpy as np

from .errors import ValidationError
from .model import LayerSpec, Model, out_size, pad_amounts
from .quant import QuantTensor, requantize_array


def im2col(x_raw: np.ndarray, kernel_h: int, kernel_w: int, stride: int,
           padding: str, zero_point: int) -> np.ndarray:
    """(out_h*out_w, kernel_h*kernel_w*C) raw int8 patch matrix.

    Rows follow output positions row-major; out-of-bounds cells hold the
    zero point so they vanish once centered.
    """
    h, w, c = x_raw.shape
    oh = out_size(h, kernel_h, stride, padding)
    ow = out_size(w, kernel_w, stride, padding)
    ph = pad_amounts(h, kernel_h, stride, padding)
    pw = pad_amounts(w, kernel_w, stride, padding)
    x = x_raw
    if ph != (0, 0) or pw != (0, 0):
        x = np.pad(x, (ph, pw, (0, 0)), constant_values=zero_point)
    cols = np.empty((oh * ow, kernel_h * kernel_w * c), dtype=np.int8)
    for oy in range(oh):
        for ox in range(ow):
            patch = x[oy * stride:oy * stride + kernel_h,
                      ox * stride:ox * stride + kernel_w, :]
            cols[oy * ow + ox] = patch.reshape(-1)
    return cols


def layer_patches(x_raw: np.ndarray, layer: LayerSpec) -> np.ndarray:
    """Patch matrix for a conv-like layer: (positions, m) centered int64.

    For dwconv2d the full multi-channel patches are returned; callers slice
    per channel with `dw_channel_columns`.
    """
    if layer.kind == "fully_connected":
        return (x_raw.astype(np.int64) - layer.in_zp).reshape(1, -1)
    cols = im2col(x_raw, layer.kernel_h, layer.kernel_w, layer.stride,
                  layer.padding, layer.in_zp)
    return cols.astype(np.int64) - layer.in_zp


def dw_channel_columns(patches: np.ndarray, n_channels: int, channel: int) -> np.ndarray:
    """Select one channel's (ky, kx) taps out of multi-channel patches."""
    return patches[:, channel::n_channels]


def dot_ref(patch_row: np.ndarray, weights_slice: np.ndarray, bias: int,
            zx: int) -> int:
    """Scalar oracle for one neuron's accumulator: bias + sum (x - zx) * w.

    Takes raw inputs and subtracts the zero point per element; exact
    integer arithmetic, no requantization.
    """
    if len(patch_row) != len(weights_slice):
        raise ValidationError(
            f"dot_ref length mismatch: {len(patch_row)} inputs vs "
            f"{len(weights_slice)} weights")
    acc = int(bias)
    for xi, wi in zip(patch_row, weights_slice):
        acc += (int(xi) - zx) * int(wi)
    return acc


def argmax(tensor) -> int:
    """Flat index of the largest element; ties break to the lowest index."""
    data = tensor.data if isinstance(tensor, QuantTensor) else np.asarray(tensor)
    return int(np.argmax(data))


def conv_like_ref(x_raw: np.ndarray, layer: LayerSpec) -> np.ndarray:
    """Baseline conv2d / dwconv2d / fully_connected over one input (H, W, C)."""
    patches = layer_patches(x_raw, layer)
    n_out = layer.out_channels
    oh, ow, _ = layer.out_shape
    out = np.empty((oh * ow, n_out), dtype=np.int8)
    if layer.kind == "dwconv2d":
        for ch in range(n_out):
            cols = dw_channel_columns(patches, n_out, ch)
            acc = cols @ layer.weights[ch].astype(np.int64) + int(layer.bias[ch])
            out[:, ch] = requantize_array(acc, layer.requant[ch])
    else:
        acc = patches @ layer.weights.astype(np.int64).T + layer.bias.astype(np.int64)
        for ch in range(n_out):
            out[:, ch] = requantize_array(acc[:, ch], layer.requant[ch])
    return out.reshape(oh, ow, n_out)


def maxpool_ref(x_raw: np.ndarray, layer: LayerSpec) -> np.ndarray:
    oh, ow, c = layer.out_shape
    s = layer.stride
    out = np.empty((oh, ow, c), dtype=np.int8)
    for oy in range(oh):
        for ox in range(ow):
            win = x_raw[oy * s:oy * s + layer.kernel_h, ox * s:ox * s + layer.kernel_w, :]
            out[oy, ox, :] = win.max(axis=(0, 1))
    return out


def reduce_max_ref(x_raw: np.ndarray, layer: LayerSpec) -> np.ndarray:
    return x_raw.max(axis=(0, 1), keepdims=True).astype(np.int8)


def layer_ref(x_raw: np.ndarray, layer: LayerSpec) -> np.ndarray:
    if layer.kind in ("conv2d", "dwconv2d", "fully_connected"):
        return conv_like_ref(x_raw, layer)
    if layer.kind == "maxpool":
        return maxpool_ref(x_raw, layer)
    if layer.kind == "reduce_max":
        return reduce_max_ref(x_raw, layer)
    raise ValidationError(f"unknown layer kind {layer.kind!r}")


def run_reference(model: Model, x: QuantTensor,
                  keep_intermediates: bool = False):
    """Run the whole chain; returns (QuantTensor, [per-layer raw arrays])."""
    model.check_input(x)
    cur = x.data[0]
    inters: list[np.ndarray] = []
    for layer in model.layers:
        cur = layer_ref(cur, layer)
        if keep_intermediates:
            inters.append(cur)
    last = model.layers[-1]
    out = QuantTensor(data=cur[np.newaxis, ...], scale=last.out_scale,
                      zero_point=last.out_zp)
    return out, inters
