"""Cross-check a converted manifest against the tflite reference interpreter.

The converted model is executed through the engine's command line interface
(baseline mode, tensors exchanged as .sact files) and tf.lite.Interpreter
runs the source model on identical random int8 inputs. Because the two
implementations round requantization results differently, individual logits
may land one step apart; agreement is measured as top-1 match rate plus the
maximum per-logit difference.
"""

from __future__ import annotations

import json
import shutil
import subprocess
import tempfile
from pathlib import Path

import numpy as np

from .errors import VerifyError
from .formats import read_tensor, write_tensor

TOP1_THRESHOLD = 0.99
LOGIT_THRESHOLD = 1


def _engine_run(engine: str, manifest: Path, x_path: Path, y_path: Path) -> None:
    cmd = [engine, "run", str(manifest), "--mode", "baseline",
           "--input", str(x_path), "-o", str(y_path)]
    proc = subprocess.run(cmd, capture_output=True, text=True)
    if proc.returncode != 0:
        raise VerifyError(f"engine run failed ({proc.returncode}): {proc.stderr.strip()}")


def verify_model(manifest_path: str | Path, tflite_path: str | Path,
                 n_inputs: int, seed: int, engine: str = "satconv") -> dict:
    """Run n_inputs random tensors through both stacks and compare outputs."""
    import tensorflow as tf

    if n_inputs < 1:
        raise VerifyError(f"need at least one input, got {n_inputs}")
    if shutil.which(engine) is None:
        raise VerifyError(f"engine executable {engine!r} not found on PATH")
    manifest = json.loads(Path(manifest_path).read_text(encoding="utf-8"))
    in_shape = tuple(manifest["input"]["shape"])

    interp = tf.lite.Interpreter(model_path=str(tflite_path))
    interp.allocate_tensors()
    inp = interp.get_input_details()[0]
    out = interp.get_output_details()[0]
    if np.dtype(inp["dtype"]) != np.int8 or np.dtype(out["dtype"]) != np.int8:
        raise VerifyError("tflite model input/output must be int8 for verification")
    tfl_shape = tuple(int(d) for d in inp["shape"])
    if int(np.prod(tfl_shape)) != int(np.prod(in_shape)):
        raise VerifyError(f"input shape mismatch: manifest {in_shape}, tflite {tfl_shape}")

    rng = np.random.default_rng(seed)
    top1 = 0
    max_diff = 0
    with tempfile.TemporaryDirectory(prefix="satconv-import-") as tmp:
        tmp_path = Path(tmp)
        x_path = tmp_path / "x.sact"
        y_path = tmp_path / "y.sact"
        for _ in range(n_inputs):
            x = rng.integers(-128, 128, size=in_shape, dtype=np.int8)
            write_tensor(x, x_path)
            _engine_run(engine, Path(manifest_path), x_path, y_path)
            got = read_tensor(y_path).ravel().astype(np.int64)
            interp.set_tensor(inp["index"], x.reshape(tfl_shape))
            interp.invoke()
            want = interp.get_tensor(out["index"]).ravel().astype(np.int64)
            if got.shape != want.shape:
                raise VerifyError(f"output size mismatch: engine {got.shape}, tflite {want.shape}")
            if int(np.argmax(got)) == int(np.argmax(want)):
                top1 += 1
            max_diff = max(max_diff, int(np.max(np.abs(got - want))))

    agreement = top1 / n_inputs
    return {
        "inputs": n_inputs,
        "seed": seed,
        "top1_matches": top1,
        "top1_agreement": agreement,
        "max_logit_diff": max_diff,
        "pass": agreement >= TOP1_THRESHOLD and max_diff <= LOGIT_THRESHOLD,
    }
