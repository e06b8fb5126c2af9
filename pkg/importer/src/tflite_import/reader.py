"""Flatbuffer reader: lifts a .tflite model into plain dataclasses.

Only the pieces the converter needs are extracted: operator order, builtin
options for the handful of supported ops, tensor shapes, quantization
parameters, and raw constant buffers. tensorflow is imported lazily because
it is only needed once a file is actually opened.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import SourceFormatError

# tflite TensorType codes for the dtypes the importer accepts.
TENSOR_INT8 = 9
TENSOR_INT32 = 2

_ACTIVATION_NAMES = {
    0: "NONE",
    1: "RELU",
    2: "RELU_N1_TO_1",
    3: "RELU6",
    4: "TANH",
    5: "SIGN_BIT",
}


@dataclass
class TensorInfo:
    index: int
    name: str
    dtype: int
    shape: tuple[int, ...]
    scales: np.ndarray | None
    zero_points: np.ndarray | None
    quant_dim: int
    data: bytes | None

    @property
    def is_const(self) -> bool:
        return self.data is not None

    def scalar_quant(self, what: str) -> tuple[float, int]:
        """Per-tensor (scale, zero_point); rejects per-channel quantization."""
        if self.scales is None or len(self.scales) != 1:
            n = 0 if self.scales is None else len(self.scales)
            raise SourceFormatError(f"{what}: expected per-tensor quantization, got {n} scales")
        return float(self.scales[0]), int(self.zero_points[0])


@dataclass
class OpInfo:
    index: int
    name: str
    inputs: tuple[int, ...]
    outputs: tuple[int, ...]
    options: dict = field(default_factory=dict)


@dataclass
class GraphInfo:
    tensors: list[TensorInfo]
    ops: list[OpInfo]
    input: int
    output: int


def _decode_options(fb, op, name) -> dict:
    def load(cls):
        buf = op.BuiltinOptions()
        if buf is None:
            return None
        inst = cls()
        inst.Init(buf.Bytes, buf.Pos)
        return inst

    pad_names = {fb.Padding.SAME: "same", fb.Padding.VALID: "valid"}
    if name == "CONV_2D":
        o = load(fb.Conv2DOptions)
        return {
            "stride_h": o.StrideH(), "stride_w": o.StrideW(),
            "dilation_h": o.DilationHFactor(), "dilation_w": o.DilationWFactor(),
            "padding": pad_names.get(o.Padding(), "?"),
            "activation": _ACTIVATION_NAMES.get(o.FusedActivationFunction(), "?"),
        }
    if name == "DEPTHWISE_CONV_2D":
        o = load(fb.DepthwiseConv2DOptions)
        return {
            "stride_h": o.StrideH(), "stride_w": o.StrideW(),
            "dilation_h": o.DilationHFactor(), "dilation_w": o.DilationWFactor(),
            "padding": pad_names.get(o.Padding(), "?"),
            "activation": _ACTIVATION_NAMES.get(o.FusedActivationFunction(), "?"),
            "depth_multiplier": o.DepthMultiplier(),
        }
    if name == "MAX_POOL_2D":
        o = load(fb.Pool2DOptions)
        return {
            "stride_h": o.StrideH(), "stride_w": o.StrideW(),
            "filter_h": o.FilterHeight(), "filter_w": o.FilterWidth(),
            "padding": pad_names.get(o.Padding(), "?"),
            "activation": _ACTIVATION_NAMES.get(o.FusedActivationFunction(), "?"),
        }
    if name == "FULLY_CONNECTED":
        o = load(fb.FullyConnectedOptions)
        return {
            "activation": _ACTIVATION_NAMES.get(o.FusedActivationFunction(), "?"),
            "weights_format": o.WeightsFormat(),
        }
    if name == "REDUCE_MAX":
        o = load(fb.ReducerOptions)
        return {"keep_dims": bool(o.KeepDims()) if o is not None else False}
    return {}


def load_graph(path: str | Path) -> GraphInfo:
    from tensorflow.lite.python import schema_py_generated as fb

    try:
        blob = Path(path).read_bytes()
    except OSError as e:
        raise SourceFormatError(f"cannot read {path}: {e}") from None
    try:
        model = fb.Model.GetRootAs(blob, 0)
    except Exception as e:
        raise SourceFormatError(f"{path}: not a tflite flatbuffer: {e}") from None
    if model.SubgraphsLength() != 1:
        raise SourceFormatError(f"expected a single subgraph, got {model.SubgraphsLength()}")
    graph = model.Subgraphs(0)

    op_names = {
        code: name
        for name, code in vars(fb.BuiltinOperator).items()
        if isinstance(code, int) and not name.startswith("_")
    }

    tensors: list[TensorInfo] = []
    for i in range(graph.TensorsLength()):
        t = graph.Tensors(i)
        q = t.Quantization()
        scales = zps = None
        quant_dim = 0
        if q is not None and q.ScaleLength():
            scales = q.ScaleAsNumpy().astype(np.float64)
            zps = q.ZeroPointAsNumpy().astype(np.int64)
            quant_dim = q.QuantizedDimension()
        buf = model.Buffers(t.Buffer()) if t.Buffer() else None
        data = buf.DataAsNumpy().tobytes() if buf is not None and buf.DataLength() else None
        name = t.Name().decode("utf-8", "replace") if t.Name() else f"tensor_{i}"
        shape = tuple(int(t.Shape(j)) for j in range(t.ShapeLength()))
        tensors.append(TensorInfo(index=i, name=name, dtype=t.Type(), shape=shape,
                                  scales=scales, zero_points=zps, quant_dim=quant_dim,
                                  data=data))

    ops: list[OpInfo] = []
    for i in range(graph.OperatorsLength()):
        op = graph.Operators(i)
        oc = model.OperatorCodes(op.OpcodeIndex())
        code = max(oc.BuiltinCode(), oc.DeprecatedBuiltinCode())
        if code == fb.BuiltinOperator.CUSTOM:
            custom = oc.CustomCode()
            name = custom.decode("utf-8", "replace") if custom else "CUSTOM"
        else:
            name = op_names.get(code, f"OP_{code}")
        inputs = tuple(int(op.Inputs(j)) for j in range(op.InputsLength()))
        outputs = tuple(int(op.Outputs(j)) for j in range(op.OutputsLength()))
        ops.append(OpInfo(index=i, name=name, inputs=inputs, outputs=outputs,
                          options=_decode_options(fb, op, name)))

    if graph.InputsLength() != 1 or graph.OutputsLength() != 1:
        raise SourceFormatError(
            f"expected one input and one output, got {graph.InputsLength()}/{graph.OutputsLength()}")
    return GraphInfo(tensors=tensors, ops=ops,
                     input=int(graph.Inputs(0)), output=int(graph.Outputs(0)))
