"""Conversion tests: structure, losslessness, determinism, rejection paths."""

import base64
import json
import shutil
import subprocess

import numpy as np
import pytest

from tflite_import import SourceFormatError, UnsupportedOpError, convert
from tflite_import.convert import activation_clamp, out_size
from tflite_import.formats import derive_multiplier
from tflite_import.reader import load_graph

needs_engine = pytest.mark.skipif(shutil.which("satconv") is None,
                                  reason="satconv executable not installed")


def _manifest(path):
    return json.loads(path.read_text())


def _weights_bytes(graph, op_index):
    op = graph.ops[op_index]
    return graph.tensors[op.inputs[1]].data


def test_conv_model_layer_chain(conv_tflite, tmp_path):
    out = tmp_path / "m.sacnn"
    doc, report = convert(conv_tflite, out)
    assert [l["kind"] for l in doc["layers"]] == ["conv2d", "maxpool", "fully_connected"]
    assert doc["version"] == 1
    assert doc["input"]["shape"] == [1, 8, 8, 1]
    handling = {row["op"]: row["handling"] for row in report["ops"]}
    assert handling["RESHAPE"].startswith("absorbed")
    assert handling["SHAPE"] == "shape metadata, dropped"
    assert handling["CONV_2D"] == "layer 0 (conv2d)"
    assert report["warnings"]


def test_manifest_matches_source_quantization(conv_tflite, tmp_path):
    doc, _ = convert(conv_tflite, tmp_path / "m.sacnn")
    graph = load_graph(conv_tflite)
    in_t = graph.tensors[graph.input]
    assert doc["input"]["scale"] == float(in_t.scales[0])
    assert doc["input"]["zero_point"] == int(in_t.zero_points[0])
    conv_out = graph.tensors[graph.ops[0].outputs[0]]
    layer0 = doc["layers"][0]
    assert layer0["out_scale"] == float(conv_out.scales[0])
    assert all(q["zo"] == int(conv_out.zero_points[0]) for q in layer0["requant"])


def test_conv_and_fc_weights_bit_exact(conv_tflite, tmp_path):
    doc, _ = convert(conv_tflite, tmp_path / "m.sacnn")
    graph = load_graph(conv_tflite)
    conv_entry = doc["layers"][0]
    assert base64.b64decode(conv_entry["weights_b64"]) == _weights_bytes(graph, 0)
    fc_entry = doc["layers"][2]
    fc_op = next(op for op in graph.ops if op.name == "FULLY_CONNECTED")
    assert base64.b64decode(fc_entry["weights_b64"]) == _weights_bytes(graph, fc_op.index)


def test_bias_values_preserved(conv_tflite, tmp_path):
    doc, _ = convert(conv_tflite, tmp_path / "m.sacnn")
    graph = load_graph(conv_tflite)
    for entry, op in [(doc["layers"][0], graph.ops[0])]:
        src = np.frombuffer(graph.tensors[op.inputs[2]].data, dtype="<i4")
        got = np.frombuffer(base64.b64decode(entry["bias_b64"]), dtype="<i4")
        assert np.array_equal(got, src)
        assert np.any(src != 0)


def test_depthwise_weights_lossless_after_transpose(gmp_tflite, tmp_path):
    doc, _ = convert(gmp_tflite, tmp_path / "m.sacnn")
    graph = load_graph(gmp_tflite)
    dw_op = next(op for op in graph.ops if op.name == "DEPTHWISE_CONV_2D")
    w_t = graph.tensors[dw_op.inputs[1]]
    _, kh, kw, c = w_t.shape
    dw_entry = next(l for l in doc["layers"] if l["kind"] == "dwconv2d")
    rows = np.frombuffer(base64.b64decode(dw_entry["weights_b64"]), dtype=np.int8)
    rows = rows.reshape(c, kh * kw)
    # invert the channel-major transform and compare against the raw buffer
    back = rows.reshape(c, kh, kw).transpose(1, 2, 0)
    src = np.frombuffer(w_t.data, dtype=np.int8).reshape(kh, kw, c)
    assert np.array_equal(back, src)


def test_reduce_max_covers_spatial_extent(gmp_tflite, tmp_path):
    doc, _ = convert(gmp_tflite, tmp_path / "m.sacnn")
    kinds = [l["kind"] for l in doc["layers"]]
    assert kinds == ["conv2d", "dwconv2d", "reduce_max", "fully_connected"]
    dw = doc["layers"][1]
    rm = doc["layers"][2]
    # depthwise output is 6x6 here: 10 -> conv 3x3 valid -> 8 -> dw 3x3 valid -> 6
    assert (rm["geometry"]["kernel_h"], rm["geometry"]["kernel_w"]) == (6, 6)
    assert rm["geometry"]["out_channels"] == dw["geometry"]["out_channels"]


def test_requant_multipliers_encode_scale_ratios(gmp_tflite, tmp_path):
    doc, _ = convert(gmp_tflite, tmp_path / "m.sacnn")
    graph = load_graph(gmp_tflite)
    scale = float(graph.tensors[graph.input].scales[0])
    conv_ops = [op for op in graph.ops
                if op.name in ("CONV_2D", "DEPTHWISE_CONV_2D", "FULLY_CONNECTED")]
    conv_layers = [l for l in doc["layers"] if "requant" in l]
    for op, entry in zip(conv_ops, conv_layers):
        w_scales = graph.tensors[op.inputs[1]].scales
        out_scale = float(graph.tensors[op.outputs[0]].scales[0])
        if len(w_scales) == 1:
            w_scales = np.repeat(w_scales, len(entry["requant"]))
        for q, ws in zip(entry["requant"], w_scales):
            assert (1 << 30) <= q["M"] < (1 << 31)
            assert -30 <= q["s"] <= 31
            want = scale * float(ws) / out_scale
            got = q["M"] * 2.0 ** (-31 - q["s"])
            assert got == pytest.approx(want, rel=2.0 ** -30)
        scale = out_scale


def test_conversion_is_deterministic(conv_tflite, tmp_path):
    out = tmp_path / "m.sacnn"
    doc1, report1 = convert(conv_tflite, out)
    first = out.read_bytes()
    doc2, report2 = convert(conv_tflite, out)
    assert doc1 == doc2
    assert report1 == report2
    assert out.read_bytes() == first


@needs_engine
def test_converted_manifest_runs_in_engine(conv_tflite, gmp_tflite, tmp_path):
    for i, src in enumerate((conv_tflite, gmp_tflite)):
        out = tmp_path / f"m{i}.sacnn"
        convert(src, out)
        res = subprocess.run(
            ["satconv", "run", str(out), "--seed", "5", "-o", str(tmp_path / f"y{i}.sact")],
            capture_output=True, text=True)
        assert res.returncode == 0, res.stderr


def test_softmax_rejected_by_name(softmax_tflite, tmp_path):
    with pytest.raises(UnsupportedOpError, match="SOFTMAX"):
        convert(softmax_tflite, tmp_path / "m.sacnn")


def test_same_padding_pool_rejected(same_pad_pool_tflite, tmp_path):
    with pytest.raises(UnsupportedOpError, match="valid padding"):
        convert(same_pad_pool_tflite, tmp_path / "m.sacnn")


def test_float_model_rejected(float_tflite, tmp_path):
    with pytest.raises(SourceFormatError, match="int8"):
        convert(float_tflite, tmp_path / "m.sacnn")


def test_missing_file_rejected(tmp_path):
    with pytest.raises(SourceFormatError, match="cannot read"):
        convert(tmp_path / "nope.tflite", tmp_path / "m.sacnn")


def test_activation_clamp_mapping():
    assert activation_clamp("NONE", 0.1, 0, "op") == (-128, 127)
    assert activation_clamp("RELU", 0.1, -10, "op") == (-10, 127)
    assert activation_clamp("RELU", 0.1, -128, "op") == (-128, 127)
    assert activation_clamp("RELU6", 0.05, -120, "op") == (-120, 0)
    with pytest.raises(UnsupportedOpError, match="TANH"):
        activation_clamp("TANH", 0.1, 0, "op")


def test_derive_multiplier_vectors():
    assert derive_multiplier(1.0) == (1 << 30, -1)
    assert derive_multiplier(0.5) == (1 << 30, 0)
    rng = np.random.default_rng(2)
    for r in rng.uniform(1e-6, 2.0, size=200):
        m, s = derive_multiplier(float(r))
        assert (1 << 30) <= m < (1 << 31)
        assert m * 2.0 ** (-31 - s) == pytest.approx(r, rel=2.0 ** -30)
    for bad in (0.0, -1.0, 2.5, float("nan")):
        with pytest.raises(SourceFormatError):
            derive_multiplier(bad)


def test_out_size_formulas():
    assert out_size(8, 3, 1, "valid") == 6
    assert out_size(8, 2, 2, "valid") == 4
    assert out_size(7, 2, 2, "same") == 4
    assert out_size(7, 2, 2, "valid") == 3
