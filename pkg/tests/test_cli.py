"""End-to-end CLI workflows and exit-code contract."""

import json

import numpy as np
import pytest

from satconv.cli import build_parser, main
from satconv.io import load_array, save_array
from satconv.report import ANALYZE_HEADER, REPORT_HEADER, TRACE_HEADER


@pytest.fixture(scope="module")
def ws(tmp_path_factory):
    """Workspace with a generated model, profile, and plan."""
    root = tmp_path_factory.mktemp("cli")
    model = root / "model.sacnn"
    prof = root / "model.prof.json"
    plan = root / "model.plan.json"
    assert main(["gen", "--preset", "sat-heavy", "--seed", "0", "-o", str(model)]) == 0
    assert main(["profile", str(model), "--inputs", "8", "--seed", "101",
                 "-o", str(prof)]) == 0
    assert main(["plan", str(model), "--profile", str(prof), "-o", str(plan)]) == 0
    return root


def test_gen_is_byte_deterministic(tmp_path, capsys):
    a, b = tmp_path / "a.sacnn", tmp_path / "b.sacnn"
    assert main(["gen", "--preset", "tiny", "--seed", "4", "-o", str(a)]) == 0
    assert main(["gen", "--preset", "tiny", "--seed", "4", "-o", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert "MACs/inference" in capsys.readouterr().out


def test_version_exits_cleanly(capsys):
    with pytest.raises(SystemExit) as e:
        main(["--version"])
    assert e.value.code == 0
    out = capsys.readouterr().out
    assert "satconv" in out and "plan format" in out


def test_analyze_writes_csv_and_figure(ws, capsys):
    out = ws / "analyze.csv"
    rc = main(["analyze", str(ws / "model.sacnn"), "--inputs", "4", "-o", str(out)])
    assert rc == 0
    lines = out.read_text().strip().splitlines()
    assert lines[0] == ",".join(ANALYZE_HEADER)
    assert lines[-1].startswith("total,")
    assert (ws / "analyze.png").exists()
    assert "effectless" in capsys.readouterr().out


def test_profile_and_plan_artifacts(ws, capsys):
    doc = json.loads((ws / "model.prof.json").read_text())
    assert doc["version"] == 1 and doc["generator"] == {"inputs": 8, "seed": 101}
    assert (ws / "model.prof.png").exists()
    plan = json.loads((ws / "model.plan.json").read_text())
    assert plan["version"] == 1 and plan["model_name"] == doc["model_name"]


def test_run_modes_agree(ws, capsys):
    model = str(ws / "model.sacnn")
    base, sat = ws / "base.sact", ws / "sat.sact"
    assert main(["run", model, "--seed", "3", "-o", str(base)]) == 0
    rep = ws / "run_report.csv"
    assert main(["run", model, "--plan", str(ws / "model.plan.json"), "--seed", "3",
                 "-o", str(sat), "--report", str(rep)]) == 0
    assert np.array_equal(load_array(base), load_array(sat))
    assert rep.read_text().splitlines()[0] == ",".join(REPORT_HEADER)
    assert (ws / "run_report.png").exists()
    out = capsys.readouterr().out
    assert "baseline:" in out and "sat:" in out and "argmax" in out


def test_bench_default_report_path(ws, capsys):
    model = str(ws / "model.sacnn")
    rc = main(["bench", model, "--plan", str(ws / "model.plan.json"),
               "--inputs", "12", "--seed", "5"])
    assert rc == 0
    out = capsys.readouterr().out
    assert "equality: 12/12" in out
    report = ws / "model.report.csv"
    assert report.exists()
    lines = report.read_text().strip().splitlines()
    assert lines[0] == ",".join(REPORT_HEADER) and lines[-1].startswith("total,")
    assert (ws / "model.report.png").exists()


def test_trace_emits_one_row_per_step(ws, capsys):
    out = ws / "trace.csv"
    rc = main(["trace", str(ws / "model.sacnn"), "--plan", str(ws / "model.plan.json"),
               "--neuron", "0:0:0:0", "--seed", "1", "-o", str(out)])
    assert rc == 0
    lines = out.read_text().strip().splitlines()
    assert lines[0] == ",".join(TRACE_HEADER)
    assert len(lines) == 1 + 18  # 3x3 kernel over 2 input channels
    assert (ws / "trace.png").exists()


def test_inputs_dir_is_consumed(ws, tmp_path, capsys):
    xdir = tmp_path / "inputs"
    xdir.mkdir()
    rng = np.random.default_rng(1)
    for i in range(2):
        save_array(rng.integers(-128, 128, (1, 8, 8, 2)).astype(np.int8),
                   xdir / f"x{i}.sact")
    rc = main(["bench", str(ws / "model.sacnn"), "--plan", str(ws / "model.plan.json"),
               "--inputs-dir", str(xdir), "-o", str(tmp_path / "r.csv")])
    assert rc == 0
    assert "equality: 2/2" in capsys.readouterr().out


def test_default_input_counts():
    parser = build_parser()
    assert parser.parse_args(["analyze", "m", "-o", "x"]).inputs == 8
    assert parser.parse_args(["profile", "m", "-o", "x"]).inputs == 32
    assert parser.parse_args(["bench", "m", "--plan", "p"]).inputs == 100


# ---------------------------------------------------------------------------
# exit codes


def test_usage_errors_exit_1(ws, tmp_path, capsys):
    model = str(ws / "model.sacnn")
    assert main(["gen", "--nope"]) == 1
    assert main(["trace", model, "--neuron", "1:2:3",
                 "-o", str(tmp_path / "t.csv")]) == 1
    assert main(["bench", model, "--plan", str(ws / "model.plan.json"),
                 "--inputs", "0"]) == 1
    assert main(["run", model, "--mode", "sat", "-o", str(tmp_path / "o.sact")]) == 1
    err = capsys.readouterr().err
    assert "usage error" in err


def test_data_errors_exit_2(ws, tmp_path, capsys):
    missing = str(tmp_path / "absent.sacnn")
    assert main(["analyze", missing, "-o", str(tmp_path / "a.csv")]) == 2
    assert "absent.sacnn" in capsys.readouterr().err

    bad = tmp_path / "bad.sacnn"
    bad.write_text("{broken")
    assert main(["analyze", str(bad), "-o", str(tmp_path / "a.csv")]) == 2

    other = tmp_path / "tiny.sacnn"
    assert main(["gen", "--preset", "tiny", "--seed", "0", "-o", str(other)]) == 0
    assert main(["plan", str(other), "--profile", str(ws / "model.prof.json"),
                 "-o", str(tmp_path / "p.json")]) == 2

    junk = tmp_path / "x.sact"
    junk.write_bytes(b"XXXX" + bytes(12))
    assert main(["run", str(ws / "model.sacnn"), "--input", str(junk),
                 "-o", str(tmp_path / "o.sact")]) == 2


def test_lying_plan_trips_invariant_exit_3(ws, tmp_path, capsys):
    # zeroed deviation envelopes pass format checks but promise exits that are
    # not sound; bench must catch the divergence rather than ship it
    doc = json.loads((ws / "model.plan.json").read_text())
    for layer in doc["layers"]:
        for ch in layer["channels"]:
            if ch is not None:
                for check in ch["checks"]:
                    check["d_min"] = 0
                    check["d_max"] = 0
    lying = tmp_path / "lying.plan.json"
    lying.write_text(json.dumps(doc))
    rc = main(["bench", str(ws / "model.sacnn"), "--plan", str(lying),
               "--inputs", "6", "--seed", "2", "-o", str(tmp_path / "r.csv")])
    assert rc == 3
    assert "diverged" in capsys.readouterr().err
