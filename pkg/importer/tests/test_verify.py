"""Cross-validation against the tflite reference interpreter.

These tests exercise the full external loop: the converted manifest runs
through the installed satconv executable while tf.lite.Interpreter evaluates
the source model on the same inputs.
"""

import base64
import json
import shutil
import subprocess
import sys

import numpy as np
import pytest

from tflite_import import convert, verify_model
from tflite_import.errors import VerifyError

pytestmark = pytest.mark.skipif(shutil.which("satconv") is None,
                                reason="satconv executable not installed")


@pytest.fixture(scope="module")
def conv_sacnn(conv_tflite, tmp_path_factory):
    out = tmp_path_factory.mktemp("verify") / "conv.sacnn"
    convert(conv_tflite, out)
    return out


def test_toy_conv_agreement_over_100_inputs(conv_tflite, conv_sacnn):
    report = verify_model(conv_sacnn, conv_tflite, 100, seed=2026)
    print(f"verify: top-1 {report['top1_matches']}/100, "
          f"max logit diff {report['max_logit_diff']}")
    assert report["top1_matches"] >= 99
    assert report["max_logit_diff"] <= 1
    assert report["pass"]


def test_gmp_model_agreement(gmp_tflite, tmp_path):
    out = tmp_path / "gmp.sacnn"
    convert(gmp_tflite, out)
    report = verify_model(out, gmp_tflite, 30, seed=5)
    assert report["top1_matches"] >= 29
    assert report["max_logit_diff"] <= 1
    assert report["pass"]


def test_verification_is_deterministic(conv_tflite, conv_sacnn):
    a = verify_model(conv_sacnn, conv_tflite, 8, seed=42)
    b = verify_model(conv_sacnn, conv_tflite, 8, seed=42)
    assert a == b


def test_corrupted_weights_are_flagged(conv_tflite, conv_sacnn, tmp_path):
    doc = json.loads(conv_sacnn.read_text())
    blob = bytearray(base64.b64decode(doc["layers"][0]["weights_b64"]))
    mutated = (np.frombuffer(bytes(blob), dtype=np.int8).astype(np.int16) + 96)
    wrapped = ((mutated + 128) % 256 - 128).astype(np.int8)
    doc["layers"][0]["weights_b64"] = base64.b64encode(wrapped.tobytes()).decode("ascii")
    bad = tmp_path / "bad.sacnn"
    bad.write_text(json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n")
    report = verify_model(bad, conv_tflite, 20, seed=2026)
    assert not report["pass"]


def test_missing_engine_raises(conv_tflite, conv_sacnn):
    with pytest.raises(VerifyError, match="not found"):
        verify_model(conv_sacnn, conv_tflite, 2, seed=0, engine="satconv-does-not-exist")


def test_cli_convert_and_verify(conv_tflite, tmp_path):
    out = tmp_path / "cli.sacnn"
    res = subprocess.run(
        [sys.executable, "-m", "tflite_import.cli", str(conv_tflite), str(out),
         "--verify", "5", "--seed", "3"],
        capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
    report = json.loads(res.stdout)
    assert report["verify"]["inputs"] == 5
    assert report["verify"]["pass"] is True
    assert out.exists()


def test_cli_names_unsupported_op(softmax_tflite, tmp_path):
    res = subprocess.run(
        [sys.executable, "-m", "tflite_import.cli", str(softmax_tflite),
         str(tmp_path / "x.sacnn")],
        capture_output=True, text=True)
    assert res.returncode == 2
    assert "SOFTMAX" in res.stderr


def test_cli_usage_error_exit_code():
    res = subprocess.run([sys.executable, "-m", "tflite_import.cli"],
                         capture_output=True, text=True)
    assert res.returncode == 1
