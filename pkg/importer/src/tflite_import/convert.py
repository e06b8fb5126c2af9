"""Translate a full-integer .tflite graph into a .sacnn manifest.

The target format models a single-chain int8 network: conv2d, dwconv2d and
fully_connected layers carrying channel-major weights, int32 biases and
per-channel fixed-point requantization, plus maxpool and reduce_max layers
that pass quantization through. The translation walks the tflite operators
in execution order, keeps weight and bias payloads byte-identical (modulo a
documented layout transpose for depthwise kernels), and derives each output
channel's multiplier from scale_in * scale_w[c] / scale_out.

Shape-only plumbing is absorbed: RESHAPE forwards its activation unchanged,
and SHAPE / STRIDED_SLICE / PACK are dropped when they only compute shape
metadata (int32, no activation payload). Anything else is rejected by name.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import SourceFormatError, UnsupportedOpError
from .formats import MANIFEST_VERSION, b64_bytes, derive_multiplier, write_manifest
from .reader import TENSOR_INT8, TENSOR_INT32, GraphInfo, OpInfo, TensorInfo, load_graph

INT8_MIN, INT8_MAX = -128, 127

SUPPORTED_OPS = (
    "CONV_2D",
    "DEPTHWISE_CONV_2D",
    "FULLY_CONNECTED",
    "MAX_POOL_2D",
    "REDUCE_MAX",
    "RESHAPE",
)
# Shape bookkeeping the converter lowers Keras Flatten into; these never
# touch activation data, so they are dropped rather than translated.
_METADATA_OPS = ("SHAPE", "STRIDED_SLICE", "PACK")

_ROUNDING_NOTE = (
    "engine requantization rounds half-up while the tflite reference "
    "interpreter rounds half-to-even, so individual logits may differ by "
    "one quantization step"
)


def out_size(n: int, k: int, stride: int, padding: str) -> int:
    if padding == "same":
        return -(-n // stride)
    return (n - k) // stride + 1


def activation_clamp(act: str, scale_out: float, zp_out: int, where: str) -> tuple[int, int]:
    """Map a fused activation onto the output clamp in quantized units."""
    if act == "NONE":
        return INT8_MIN, INT8_MAX
    if act == "RELU":
        return max(INT8_MIN, zp_out), INT8_MAX
    if act == "RELU6":
        hi = zp_out + int(np.floor(6.0 / scale_out + 0.5))
        return max(INT8_MIN, zp_out), min(INT8_MAX, hi)
    raise UnsupportedOpError(f"{where}: fused activation {act} is not supported")


class _Converter:
    def __init__(self, graph: GraphInfo, name: str):
        self.graph = graph
        self.name = name
        self.layers: list[dict] = []
        self.layer_stats: list[dict] = []
        self.op_rows: list[dict] = []
        self.warnings: list[str] = [_ROUNDING_NOTE]

    # -- tensor helpers ----------------------------------------------------

    def _tensor(self, idx: int) -> TensorInfo:
        return self.graph.tensors[idx]

    def _int8_weights(self, idx: int, where: str) -> TensorInfo:
        t = self._tensor(idx)
        if t.dtype != TENSOR_INT8:
            raise SourceFormatError(f"{where}: weights must be int8 (tensor {t.name!r})")
        if not t.is_const:
            raise SourceFormatError(f"{where}: weights are not constant")
        if t.zero_points is None or np.any(t.zero_points != 0):
            raise SourceFormatError(f"{where}: weight zero points must all be zero")
        return t

    def _bias(self, idx: int, n_out: int, where: str) -> np.ndarray:
        if idx < 0:
            return np.zeros(n_out, dtype=np.int32)
        t = self._tensor(idx)
        if t.dtype != TENSOR_INT32 or not t.is_const:
            raise SourceFormatError(f"{where}: bias must be a constant int32 tensor")
        bias = np.frombuffer(t.data, dtype="<i4").astype(np.int32)
        if bias.shape != (n_out,):
            raise SourceFormatError(f"{where}: bias has {bias.size} entries, expected {n_out}")
        return bias

    def _weight_scales(self, t: TensorInfo, n_out: int, where: str) -> np.ndarray:
        if t.scales is None:
            raise SourceFormatError(f"{where}: weights carry no quantization scales")
        if len(t.scales) == 1:
            return np.full(n_out, t.scales[0])
        if len(t.scales) != n_out:
            raise SourceFormatError(
                f"{where}: {len(t.scales)} weight scales for {n_out} output channels")
        return t.scales

    def _requant(self, scale_in: float, w_scales: np.ndarray, out_t: TensorInfo,
                 act: str, where: str) -> tuple[list[dict], dict]:
        scale_out, zp_out = out_t.scalar_quant(f"{where}: output")
        if not INT8_MIN <= zp_out <= INT8_MAX:
            raise SourceFormatError(f"{where}: output zero point {zp_out} outside int8 range")
        q_lo, q_hi = activation_clamp(act, scale_out, zp_out, where)
        entries = []
        ratios = []
        for c, ws in enumerate(w_scales):
            r = scale_in * float(ws) / scale_out
            try:
                m, s = derive_multiplier(r)
            except SourceFormatError as e:
                raise SourceFormatError(f"{where}: channel {c}: {e}") from None
            if not -30 <= s:
                raise SourceFormatError(f"{where}: channel {c}: ratio {r} too large (shift {s})")
            entries.append({"M": m, "s": s, "zo": zp_out, "q_lo": q_lo, "q_hi": q_hi})
            ratios.append(r)
        stats = {
            "scale_out": scale_out,
            "zero_point_out": zp_out,
            "clamp": [q_lo, q_hi],
            "ratio_min": min(ratios),
            "ratio_max": max(ratios),
        }
        return entries, stats

    def _check_shape(self, out_t: TensorInfo, want: tuple[int, ...], where: str) -> None:
        got = out_t.shape
        if got != want:
            raise SourceFormatError(f"{where}: output shape {got} does not match {want}")

    # -- op translation ----------------------------------------------------

    def _geometry(self, kh, kw, stride, padding, n_out) -> dict:
        return {"kernel_h": kh, "kernel_w": kw, "stride": stride,
                "padding": padding, "out_channels": n_out}

    def _stride(self, opts: dict, where: str) -> int:
        if opts["stride_h"] != opts["stride_w"]:
            raise SourceFormatError(
                f"{where}: stride {opts['stride_h']}x{opts['stride_w']} must be square")
        return opts["stride_h"]

    def conv(self, op: OpInfo, shape, scale, zp, where: str):
        w_t = self._int8_weights(op.inputs[1], where)
        h, w, cin = shape
        if len(w_t.shape) != 4:
            raise SourceFormatError(f"{where}: weights rank {len(w_t.shape)}, expected 4")
        n_out, kh, kw, wcin = w_t.shape
        if wcin != cin:
            raise SourceFormatError(f"{where}: weights expect {wcin} input channels, got {cin}")
        if op.options["dilation_h"] != 1 or op.options["dilation_w"] != 1:
            raise UnsupportedOpError(f"{where}: dilated convolution is not supported")
        stride = self._stride(op.options, where)
        padding = op.options["padding"]
        oh = out_size(h, kh, stride, padding)
        ow = out_size(w, kw, stride, padding)
        out_t = self._tensor(op.outputs[0])
        self._check_shape(out_t, (1, oh, ow, n_out), where)
        requant, stats = self._requant(scale, self._weight_scales(w_t, n_out, where),
                                       out_t, op.options["activation"], where)
        entry = {
            "kind": "conv2d",
            "geometry": self._geometry(kh, kw, stride, padding, n_out),
            "out_scale": stats["scale_out"],
            "requant": requant,
            # tflite conv kernels are (n_out, kh, kw, cin) row-major, which is
            # exactly the channel-major (n_out, m) order the manifest wants.
            "weights_b64": b64_bytes(np.frombuffer(w_t.data, dtype=np.int8)),
            "bias_b64": b64_bytes(self._bias(op.inputs[2] if len(op.inputs) > 2 else -1,
                                             n_out, where).astype("<i4")),
        }
        stats.update(kind="conv2d", out_channels=n_out, macs_per_neuron=kh * kw * cin)
        return entry, stats, (oh, ow, n_out), stats["scale_out"], stats["zero_point_out"]

    def dwconv(self, op: OpInfo, shape, scale, zp, where: str):
        w_t = self._int8_weights(op.inputs[1], where)
        h, w, cin = shape
        if len(w_t.shape) != 4 or w_t.shape[0] != 1:
            raise SourceFormatError(f"{where}: depthwise weights shape {w_t.shape} unexpected")
        _, kh, kw, wc = w_t.shape
        if op.options["depth_multiplier"] != 1:
            raise UnsupportedOpError(
                f"{where}: depth multiplier {op.options['depth_multiplier']} is not supported")
        if wc != cin:
            raise SourceFormatError(f"{where}: weights expect {wc} channels, got {cin}")
        if op.options["dilation_h"] != 1 or op.options["dilation_w"] != 1:
            raise UnsupportedOpError(f"{where}: dilated convolution is not supported")
        stride = self._stride(op.options, where)
        padding = op.options["padding"]
        oh = out_size(h, kh, stride, padding)
        ow = out_size(w, kw, stride, padding)
        out_t = self._tensor(op.outputs[0])
        self._check_shape(out_t, (1, oh, ow, cin), where)
        requant, stats = self._requant(scale, self._weight_scales(w_t, cin, where),
                                       out_t, op.options["activation"], where)
        # (1, kh, kw, c) -> channel-major (c, kh*kw)
        rows = np.frombuffer(w_t.data, dtype=np.int8).reshape(kh, kw, cin)
        rows = np.ascontiguousarray(rows.transpose(2, 0, 1)).reshape(cin, kh * kw)
        entry = {
            "kind": "dwconv2d",
            "geometry": self._geometry(kh, kw, stride, padding, cin),
            "out_scale": stats["scale_out"],
            "requant": requant,
            "weights_b64": b64_bytes(rows),
            "bias_b64": b64_bytes(self._bias(op.inputs[2] if len(op.inputs) > 2 else -1,
                                             cin, where).astype("<i4")),
        }
        stats.update(kind="dwconv2d", out_channels=cin, macs_per_neuron=kh * kw)
        return entry, stats, (oh, ow, cin), stats["scale_out"], stats["zero_point_out"]

    def fully_connected(self, op: OpInfo, shape, scale, zp, where: str):
        if op.options.get("weights_format", 0) != 0:
            raise UnsupportedOpError(f"{where}: shuffled fully-connected weights unsupported")
        w_t = self._int8_weights(op.inputs[1], where)
        if len(w_t.shape) != 2:
            raise SourceFormatError(f"{where}: weights rank {len(w_t.shape)}, expected 2")
        n_out, m = w_t.shape
        h, w, c = shape
        if h * w * c != m:
            raise SourceFormatError(
                f"{where}: weights expect {m} inputs, activation has {h * w * c}")
        out_t = self._tensor(op.outputs[0])
        if int(np.prod(out_t.shape)) != n_out:
            raise SourceFormatError(f"{where}: output shape {out_t.shape} != {n_out} units")
        requant, stats = self._requant(scale, self._weight_scales(w_t, n_out, where),
                                       out_t, op.options["activation"], where)
        entry = {
            "kind": "fully_connected",
            "geometry": self._geometry(1, 1, 1, "valid", n_out),
            "out_scale": stats["scale_out"],
            "requant": requant,
            # (n_out, m) row-major already matches the manifest layout; the
            # m ordering is the row-major (h, w, c) flatten of the input.
            "weights_b64": b64_bytes(np.frombuffer(w_t.data, dtype=np.int8)),
            "bias_b64": b64_bytes(self._bias(op.inputs[2] if len(op.inputs) > 2 else -1,
                                             n_out, where).astype("<i4")),
        }
        stats.update(kind="fully_connected", out_channels=n_out, macs_per_neuron=m)
        return entry, stats, (1, 1, n_out), stats["scale_out"], stats["zero_point_out"]

    def maxpool(self, op: OpInfo, shape, scale, zp, where: str):
        if op.options["activation"] != "NONE":
            raise UnsupportedOpError(
                f"{where}: fused activation {op.options['activation']} on MAX_POOL_2D")
        padding = op.options["padding"]
        if padding != "valid":
            raise UnsupportedOpError(f"{where}: max pooling requires valid padding")
        stride = self._stride(op.options, where)
        kh, kw = op.options["filter_h"], op.options["filter_w"]
        h, w, c = shape
        oh = out_size(h, kh, stride, padding)
        ow = out_size(w, kw, stride, padding)
        out_t = self._tensor(op.outputs[0])
        self._check_shape(out_t, (1, oh, ow, c), where)
        self._passthrough_quant(out_t, scale, zp, where)
        entry = {"kind": "maxpool", "geometry": self._geometry(kh, kw, stride, padding, c)}
        stats = {"kind": "maxpool", "out_channels": c}
        return entry, stats, (oh, ow, c), scale, zp

    def reduce_max(self, op: OpInfo, shape, scale, zp, where: str):
        axes_t = self._tensor(op.inputs[1])
        if not axes_t.is_const or axes_t.dtype != TENSOR_INT32:
            raise SourceFormatError(f"{where}: reduction axes must be an int32 constant")
        axes = sorted(int(a) for a in np.frombuffer(axes_t.data, dtype="<i4"))
        if axes != [1, 2]:
            raise UnsupportedOpError(
                f"{where}: only spatial (global) max reduction is supported, axes {axes}")
        h, w, c = shape
        out_t = self._tensor(op.outputs[0])
        if int(np.prod(out_t.shape)) != c:
            raise SourceFormatError(f"{where}: output shape {out_t.shape} != {c} channels")
        self._passthrough_quant(out_t, scale, zp, where)
        entry = {"kind": "reduce_max", "geometry": self._geometry(h, w, 1, "valid", c)}
        stats = {"kind": "reduce_max", "out_channels": c}
        return entry, stats, (1, 1, c), scale, zp

    def _passthrough_quant(self, out_t: TensorInfo, scale: float, zp: int, where: str) -> None:
        out_scale, out_zp = out_t.scalar_quant(f"{where}: output")
        if out_scale != scale or out_zp != zp:
            raise SourceFormatError(
                f"{where}: pooling must keep quantization, "
                f"got {out_scale}/{out_zp} from {scale}/{zp}")

    # -- graph walk ----------------------------------------------------------

    def run(self) -> dict:
        g = self.graph
        in_t = self._tensor(g.input)
        if in_t.dtype != TENSOR_INT8:
            raise SourceFormatError(
                f"graph input {in_t.name!r} is not int8; convert with full integer "
                "quantization and int8 input/output types")
        scale, zp = in_t.scalar_quant("graph input")
        if not INT8_MIN <= zp <= INT8_MAX:
            raise SourceFormatError(f"graph input zero point {zp} outside int8 range")
        if len(in_t.shape) == 4:
            if in_t.shape[0] != 1:
                raise SourceFormatError(f"graph input batch must be 1, got {in_t.shape[0]}")
            shape = tuple(in_t.shape[1:])
        elif len(in_t.shape) == 2 and in_t.shape[0] == 1:
            shape = (in_t.shape[1], 1, 1)
        else:
            raise SourceFormatError(f"graph input rank {len(in_t.shape)} is not supported")
        input_block = {"shape": [1, *shape], "scale": scale, "zero_point": zp}

        handlers = {
            "CONV_2D": self.conv,
            "DEPTHWISE_CONV_2D": self.dwconv,
            "FULLY_CONNECTED": self.fully_connected,
            "MAX_POOL_2D": self.maxpool,
            "REDUCE_MAX": self.reduce_max,
        }
        cur = g.input
        for op in g.ops:
            where = f"op {op.index} ({op.name})"
            if op.name in _METADATA_OPS:
                if any(self._tensor(t).dtype == TENSOR_INT8 for t in op.outputs):
                    raise UnsupportedOpError(
                        f"{where}: operates on activation data, not shape metadata")
                self.op_rows.append({"index": op.index, "op": op.name,
                                     "handling": "shape metadata, dropped"})
                continue
            if op.name == "RESHAPE":
                if op.inputs[0] != cur:
                    raise SourceFormatError(f"{where}: graph is not a single chain")
                src_t, dst_t = self._tensor(op.inputs[0]), self._tensor(op.outputs[0])
                if int(np.prod(src_t.shape)) != int(np.prod(dst_t.shape)):
                    raise SourceFormatError(f"{where}: reshape changes element count")
                self._passthrough_quant(dst_t, scale, zp, where)
                cur = op.outputs[0]
                self.op_rows.append({"index": op.index, "op": op.name,
                                     "handling": "absorbed, layout unchanged"})
                continue
            handler = handlers.get(op.name)
            if handler is None:
                raise UnsupportedOpError(f"{where}: operator {op.name} is not supported")
            if op.inputs[0] != cur:
                raise SourceFormatError(f"{where}: graph is not a single chain")
            entry, stats, shape, scale, zp = handler(op, shape, scale, zp, where)
            stats = {"index": len(self.layers), **stats}
            self.op_rows.append({"index": op.index, "op": op.name,
                                 "handling": f"layer {len(self.layers)} ({entry['kind']})"})
            self.layers.append(entry)
            self.layer_stats.append(stats)
            cur = op.outputs[0]

        if cur != g.output:
            raise SourceFormatError("graph output is not produced by the converted chain")
        if not self.layers:
            raise SourceFormatError("no layers to convert")
        doc = {
            "version": MANIFEST_VERSION,
            "name": self.name,
            "preset": "",
            "seed": 0,
            "input": input_block,
            "layers": self.layers,
        }
        return doc


def convert(src: str | Path, dst: str | Path) -> tuple[dict, dict]:
    """Convert src (.tflite) to dst (.sacnn); returns (manifest, report)."""
    graph = load_graph(src)
    conv = _Converter(graph, Path(src).stem)
    doc = conv.run()
    write_manifest(doc, dst)
    report = {
        "tool": "satconv-import",
        "source": str(src),
        "output": str(dst),
        "input": doc["input"],
        "supported_ops": sorted(SUPPORTED_OPS),
        "ops": conv.op_rows,
        "layers": conv.layer_stats,
        "warnings": conv.warnings,
    }
    return doc, report
