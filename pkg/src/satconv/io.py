"""Model manifest (.sacnn) and tensor container (.sact) serialization.

.sacnn is a JSON manifest: weights and biases are embedded base64, weights
channel-major int8, biases little-endian int32. Serialization is
byte-deterministic (sorted keys, fixed separators) so identical models produce
identical files.

.sact is a tiny binary container: magic "SACT", format version byte, dtype
byte (0 = int8, 1 = int32), ndim byte, ndim little-endian uint32 dims, then
the raw little-endian payload in C order.
"""

from __future__ import annotations

import base64
import binascii
import json
import struct
from pathlib import Path

import numpy as np

from .errors import FormatError, ValidationError
from .model import CONV_KINDS, LayerSpec, Model
from .quant import QuantTensor, RequantParams

FORMAT_VERSION = 1
_SACT_MAGIC = b"SACT"
_SACT_DTYPES = {0: np.int8, 1: np.int32}


def _b64(arr: np.ndarray) -> str:
    return base64.b64encode(np.ascontiguousarray(arr).tobytes()).decode("ascii")


def _un_b64(text: str, dtype, count: int, where: str) -> np.ndarray:
    try:
        raw = base64.b64decode(text, validate=True)
    except (binascii.Error, ValueError) as e:
        raise FormatError(f"{where}: invalid base64: {e}") from None
    want = count * np.dtype(dtype).itemsize
    if len(raw) != want:
        raise FormatError(f"{where}: expected {want} bytes, got {len(raw)}")
    return np.frombuffer(raw, dtype=np.dtype(dtype).newbyteorder("<")).astype(dtype)


def model_to_dict(model: Model) -> dict:
    layers = []
    for layer in model.layers:
        entry: dict = {
            "kind": layer.kind,
            "geometry": {
                "kernel_h": layer.kernel_h,
                "kernel_w": layer.kernel_w,
                "stride": layer.stride,
                "padding": layer.padding,
                "out_channels": layer.out_channels,
            },
        }
        if layer.kind in CONV_KINDS:
            entry["out_scale"] = layer.out_scale
            entry["requant"] = [
                {"M": p.M, "s": p.s, "zo": p.zo, "q_lo": p.q_lo, "q_hi": p.q_hi}
                for p in layer.requant
            ]
            entry["weights_b64"] = _b64(layer.weights)
            entry["bias_b64"] = _b64(layer.bias.astype("<i4"))
        layers.append(entry)
    return {
        "version": FORMAT_VERSION,
        "name": model.name,
        "preset": model.preset,
        "seed": model.seed,
        "input": {
            "shape": list(model.input_shape),
            "scale": model.input_scale,
            "zero_point": model.input_zp,
        },
        "layers": layers,
    }


def _need(mapping: dict, key: str, where: str):
    if key not in mapping:
        raise FormatError(f"{where}: missing field {key!r}")
    return mapping[key]


def model_from_dict(doc: dict) -> Model:
    if not isinstance(doc, dict):
        raise FormatError("manifest root must be an object")
    version = _need(doc, "version", "manifest")
    if version != FORMAT_VERSION:
        raise FormatError(f"manifest: unsupported version {version}, expected {FORMAT_VERSION}")
    inp = _need(doc, "input", "manifest")
    in_shape = tuple(_need(inp, "shape", "input"))
    if len(in_shape) != 4:
        raise FormatError(f"input: shape must have 4 dims, got {len(in_shape)}")
    scale = float(_need(inp, "scale", "input"))
    zp = int(_need(inp, "zero_point", "input"))

    layers: list[LayerSpec] = []
    cur_shape = in_shape[1:]
    cur_scale, cur_zp = scale, zp
    for i, entry in enumerate(_need(doc, "layers", "manifest")):
        where = f"layer {i}"
        kind = _need(entry, "kind", where)
        geo = _need(entry, "geometry", where)
        kh = int(_need(geo, "kernel_h", where))
        kw = int(_need(geo, "kernel_w", where))
        stride = int(_need(geo, "stride", where))
        padding = _need(geo, "padding", where)
        n_out = int(_need(geo, "out_channels", where))

        # out_channels feeds shape inference for conv2d/fully_connected; the
        # placeholder out_shape only provides that channel count.
        probe = LayerSpec(kind=kind, in_shape=cur_shape, out_shape=(1, 1, n_out),
                          in_scale=cur_scale, in_zp=cur_zp, out_scale=cur_scale, out_zp=cur_zp,
                          kernel_h=kh, kernel_w=kw, stride=stride, padding=padding)
        out_shape = probe.expected_out_shape()
        if out_shape[2] != n_out:
            raise FormatError(f"{where}: out_channels {n_out} inconsistent with geometry {out_shape}")

        if kind in CONV_KINDS:
            rq_entries = _need(entry, "requant", where)
            if len(rq_entries) != n_out:
                raise FormatError(f"{where}: requant: expected {n_out} entries, got {len(rq_entries)}")
            try:
                requant = [
                    RequantParams(M=int(_need(q, "M", where)), s=int(_need(q, "s", where)),
                                  zo=int(_need(q, "zo", where)), q_lo=int(_need(q, "q_lo", where)),
                                  q_hi=int(_need(q, "q_hi", where)))
                    for q in rq_entries
                ]
            except ValidationError as e:
                raise FormatError(f"{where}: requant: {e}") from None
            probe.requant = requant
            m = probe.m
            weights = _un_b64(_need(entry, "weights_b64", where), np.int8, n_out * m,
                              f"{where}: weights_b64").reshape(n_out, m)
            bias = _un_b64(_need(entry, "bias_b64", where), np.int32, n_out, f"{where}: bias_b64")
            out_scale = float(_need(entry, "out_scale", where))
            out_zp = requant[0].zo
            layer = LayerSpec(kind=kind, in_shape=cur_shape, out_shape=out_shape,
                              in_scale=cur_scale, in_zp=cur_zp, out_scale=out_scale, out_zp=out_zp,
                              kernel_h=kh, kernel_w=kw, stride=stride, padding=padding,
                              weights=weights, bias=bias, requant=requant)
        else:
            layer = LayerSpec(kind=kind, in_shape=cur_shape, out_shape=out_shape,
                              in_scale=cur_scale, in_zp=cur_zp, out_scale=cur_scale, out_zp=cur_zp,
                              kernel_h=kh, kernel_w=kw, stride=stride, padding=padding)
        layers.append(layer)
        cur_shape = out_shape
        cur_scale, cur_zp = layer.out_scale, layer.out_zp

    model = Model(name=str(doc.get("name", "")), input_shape=in_shape, input_scale=scale,
                  input_zp=zp, layers=layers, preset=str(doc.get("preset", "")),
                  seed=int(doc.get("seed", 0)))
    model.validate()
    return model


def save_model(model: Model, path: str | Path) -> None:
    model.validate()
    doc = model_to_dict(model)
    text = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    Path(path).write_text(text + "\n", encoding="ascii")


def load_model(path: str | Path) -> Model:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise FormatError(f"cannot read {path}: {e}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise FormatError(f"{path}: not valid JSON: {e}") from None
    return model_from_dict(doc)


def save_array(arr: np.ndarray, path: str | Path) -> None:
    codes = {np.dtype(np.int8): 0, np.dtype(np.int32): 1}
    if arr.dtype not in codes:
        raise FormatError(f"unsupported dtype {arr.dtype}, need int8 or int32")
    if arr.ndim > 255:
        raise FormatError("too many dimensions")
    head = _SACT_MAGIC + struct.pack("<BBB", FORMAT_VERSION, codes[arr.dtype], arr.ndim)
    dims = struct.pack(f"<{arr.ndim}I", *arr.shape)
    payload = np.ascontiguousarray(arr).astype(arr.dtype.newbyteorder("<")).tobytes()
    Path(path).write_bytes(head + dims + payload)


def load_array(path: str | Path) -> np.ndarray:
    try:
        raw = Path(path).read_bytes()
    except OSError as e:
        raise FormatError(f"cannot read {path}: {e}") from None
    if len(raw) < 7 or raw[:4] != _SACT_MAGIC:
        raise FormatError(f"{path}: not a SACT tensor file (bad magic)")
    version, dtype_code, ndim = struct.unpack_from("<BBB", raw, 4)
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported tensor format version {version}")
    if dtype_code not in _SACT_DTYPES:
        raise FormatError(f"{path}: unknown dtype code {dtype_code}")
    offset = 7
    if len(raw) < offset + 4 * ndim:
        raise FormatError(f"{path}: truncated header")
    dims = struct.unpack_from(f"<{ndim}I", raw, offset)
    offset += 4 * ndim
    dtype = np.dtype(_SACT_DTYPES[dtype_code])
    count = int(np.prod(dims, dtype=np.int64)) if ndim else 1
    want = count * dtype.itemsize
    if len(raw) - offset != want:
        raise FormatError(f"{path}: payload is {len(raw) - offset} bytes, dims imply {want}")
    data = np.frombuffer(raw, dtype=dtype.newbyteorder("<"), count=count, offset=offset)
    return data.astype(dtype).reshape(dims)


def save_tensor(t: QuantTensor, path: str | Path) -> None:
    save_array(t.data, path)


def load_tensor(path: str | Path, scale: float = 1.0, zero_point: int = 0) -> QuantTensor:
    arr = load_array(path)
    if arr.dtype != np.int8:
        raise FormatError(f"{path}: dtype mismatch: expected int8 activation tensor")
    if arr.ndim != 4:
        raise FormatError(f"{path}: expected 4 dims (NHWC), got {arr.ndim}")
    return QuantTensor(data=arr, scale=scale, zero_point=zero_point)
