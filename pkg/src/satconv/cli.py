"""Command-line front end.

Workflow: gen -> profile -> plan -> run/bench/trace, with analyze available
at any point. Exit codes: 0 success, 1 usage error, 2 unreadable or invalid
data, 3 internal invariant violation (a saturation-aware run disagreeing with
the baseline is a bug, never a data problem).
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import (FormatError, InvalidRatioError, InvariantViolation,
                     PlanMismatchError, ValidationError)
from .io import (FORMAT_VERSION, load_model, load_tensor, save_model, save_tensor)
from .model import Model
from .quant import QuantTensor
from .ref_kernels import argmax
from .report import (figure_path, render_analyze_figure, render_profile_figure,
                     render_report_figure, render_trace_figure, write_analyze_csv,
                     write_report_csv, write_trace_csv)
from .sat_exec import compare_modes, run_inference, trace_neuron
from .sat_plan import (PLAN_VERSION, PROFILE_VERSION, PlanConfig, acc_boundaries,
                       analyze_stats, build_plan, load_plan, load_profiles,
                       plan_overhead, profile_model, save_plan, save_profiles)
from .synthetic import PRESETS, gen_inputs, gen_synthetic


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on bad flags; this tool reserves 2 for data errors.
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _version_string() -> str:
    return (f"satconv {__version__} (model format {FORMAT_VERSION}, "
            f"plan format {PLAN_VERSION}, profile format {PROFILE_VERSION})")


def _add_input_source(p: argparse.ArgumentParser, default_count: int) -> None:
    p.add_argument("--inputs", type=int, default=default_count, metavar="N",
                   help=f"number of generated sample inputs (default {default_count})")
    p.add_argument("--seed", type=int, default=0, help="seed for generated inputs")
    p.add_argument("--inputs-dir", metavar="DIR",
                   help="directory of .sact tensors to use instead of generating")


def _resolve_inputs(args, model: Model) -> np.ndarray:
    if args.inputs_dir:
        files = sorted(Path(args.inputs_dir).glob("*.sact"))
        if not files:
            raise FormatError(f"no .sact files in {args.inputs_dir}")
        stack = []
        for f in files:
            t = load_tensor(f)
            model.check_input(t)
            stack.append(t.data[0])
        return np.stack(stack)
    if args.inputs < 1:
        raise UsageError("--inputs must be >= 1")
    return gen_inputs(model, args.inputs, args.seed)


def _single_input(args, model: Model) -> QuantTensor:
    if args.input:
        t = load_tensor(args.input, scale=model.input_scale, zero_point=model.input_zp)
        model.check_input(t)
        return t
    data = gen_inputs(model, 1, args.seed)
    return QuantTensor(data=data, scale=model.input_scale, zero_point=model.input_zp)


def _parse_neuron(text: str) -> tuple[int, int, int, int]:
    parts = text.split(":")
    if len(parts) != 4:
        raise UsageError(f"--neuron expects LAYER:CHANNEL:Y:X, got {text!r}")
    try:
        layer, channel, y, x = (int(p) for p in parts)
    except ValueError:
        raise UsageError(f"--neuron components must be integers, got {text!r}") from None
    return layer, channel, y, x


# ---------------------------------------------------------------------------
# Subcommands


def cmd_gen(args) -> int:
    model = gen_synthetic(args.preset, args.seed)
    save_model(model, args.output)
    total_macs = sum(l.m * l.out_shape[0] * l.out_shape[1] * l.out_shape[2]
                     for l in model.layers if l.kind in ("conv2d", "dwconv2d", "fully_connected"))
    print(f"wrote {args.output}: {model.name}, {len(model.layers)} layers, "
          f"{total_macs} MACs/inference")
    return 0


def cmd_analyze(args) -> int:
    model = load_model(args.model)
    inputs = _resolve_inputs(args, model)
    report = analyze_stats(model, inputs)
    write_analyze_csv(report, model, args.output)
    fig = figure_path(args.output)
    render_analyze_figure(report, model, fig)
    t = report.totals
    print(f"analyzed {len(inputs)} inputs: effectless {t.pct(t.effectless):.2f}%, "
          f"omittable ordered {t.pct(t.omittable_ordered):.2f}% / "
          f"unordered {t.pct(t.omittable_unordered):.2f}%")
    print(f"wrote {args.output} and {fig}")
    return 0


def cmd_profile(args) -> int:
    model = load_model(args.model)
    inputs = _resolve_inputs(args, model)
    profiles = profile_model(model, inputs)
    generator = ({"inputs_dir": args.inputs_dir} if args.inputs_dir
                 else {"inputs": len(inputs), "seed": args.seed})
    save_profiles(profiles, model.name, args.output, generator=generator)
    fig = figure_path(args.output)
    render_profile_figure(profiles, model, fig)
    print(f"profiled {len(profiles)} layers on {len(inputs)} inputs")
    print(f"wrote {args.output} and {fig}")
    return 0


def cmd_plan(args) -> int:
    model = load_model(args.model)
    profiles, prof_model = load_profiles(args.profile)
    if prof_model != model.name:
        raise PlanMismatchError(f"profile is for model {prof_model!r}, got {model.name!r}")
    config = PlanConfig(max_checks=args.max_checks, check_cost=args.check_cost,
                        every_step=args.every_step)
    plan = build_plan(model, profiles, config)
    save_plan(plan, args.output)
    instrumented = sum(lp.instrumented for lp in plan.layers)
    channels = sum(len(lp.channels) for lp in plan.layers)
    pb, mb, ratio = plan_overhead(plan, model)
    print(f"instrumented {instrumented}/{channels} channels; "
          f"plan {pb} bytes, model {mb} bytes ({100.0 * ratio:.1f}% overhead)")
    print(f"wrote {args.output}")
    return 0


def cmd_run(args) -> int:
    model = load_model(args.model)
    plan = load_plan(args.plan) if args.plan else None
    mode = args.mode or ("sat" if plan is not None else "baseline")
    if mode == "sat" and plan is None:
        raise UsageError("--mode sat requires --plan")
    x = _single_input(args, model)
    out, report, _ = run_inference(model, plan, x, mode,
                                   high_short_circuit=not args.no_dynamic_short_circuit)
    save_tensor(out, args.output)
    t = report.totals
    print(f"{mode}: output {out.shape}, argmax {argmax(out)}, "
          f"omitted {t.macs_omitted}/{t.macs_total} MACs "
          f"({report.omitted_pct:.2f}%), est. saving {100.0 * report.estimated_saving:.2f}%")
    if args.report:
        write_report_csv(report.layer_counters, model, args.report)
        render_report_figure(report.layer_counters, model, figure_path(args.report),
                             subtitle=mode)
        print(f"wrote {args.output} and {args.report}")
    else:
        print(f"wrote {args.output}")
    return 0


def cmd_bench(args) -> int:
    model = load_model(args.model)
    plan = load_plan(args.plan)
    inputs = _resolve_inputs(args, model)
    cmp = compare_modes(model, plan, inputs,
                        high_short_circuit=not args.no_dynamic_short_circuit)
    out = args.output or str(Path(args.model).with_suffix(".report.csv"))
    write_report_csv(cmp.layer_counters, model, out)
    fig = figure_path(out)
    pct_equal = 100.0 * cmp.n_equal / len(cmp.per_input)
    render_report_figure(cmp.layer_counters, model, fig,
                         subtitle=f"equality {pct_equal:.0f}%, {len(inputs)} inputs")
    t = cmp.totals
    saving = (t.macs_omitted - cmp.check_cost * t.checks_executed) / t.macs_total
    print(f"equality: {cmp.n_equal}/{len(cmp.per_input)} ({pct_equal:.1f}%)")
    print(f"omitted: mean {cmp.mean_omitted_pct:.2f}%, max {cmp.max_omitted_pct:.2f}%; "
          f"est. saving {100.0 * saving:.2f}% at check cost {cmp.check_cost}")
    print(f"exits: low {t.early_exits_low}, high {t.early_exits_high}, "
          f"dynamic {t.early_exits_dynamic} over {t.neurons_total} neurons")
    print(f"wrote {out} and {fig}")
    if not cmp.all_equal:
        raise InvariantViolation(
            f"saturation-aware outputs diverged from baseline on "
            f"{len(cmp.per_input) - cmp.n_equal} of {len(cmp.per_input)} inputs")
    return 0


def cmd_trace(args) -> int:
    model = load_model(args.model)
    plan = load_plan(args.plan) if args.plan else None
    layer, channel, y, x = _parse_neuron(args.neuron)
    t = _single_input(args, model)
    rows = trace_neuron(model, plan, t, layer, channel, y, x)
    write_trace_csv(rows, args.output)
    cp = None
    if plan is not None:
        lp = plan.layer_plan(layer)
        if lp is not None:
            cp = lp.channels[channel]
    bounds = cp.bounds if cp is not None else acc_boundaries(
        model.layers[layer].requant[channel])
    fig = figure_path(args.output)
    render_trace_figure(rows, bounds, fig,
                        title=f"layer {layer} channel {channel} @ ({y},{x})")
    fired = [r.step for r in rows if r.check_fired]
    fired_txt = f", checks fire at {fired}" if fired else ""
    print(f"{len(rows)} steps, final acc {rows[-1].acc}{fired_txt}")
    print(f"wrote {args.output} and {fig}")
    return 0


# ---------------------------------------------------------------------------
# Parser


def build_parser() -> _Parser:
    parser = _Parser(prog="satconv",
                     description="saturation-aware int8 CNN inference toolkit")
    parser.add_argument("--version", action="version", version=_version_string())
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("gen", parents=[], help="generate a synthetic model",
                       description="Generate a deterministic synthetic model.")
    p.add_argument("--preset", required=True, choices=PRESETS)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output", required=True, metavar="MODEL.sacnn")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("analyze", help="retrospective saturation statistics",
                       description="Measure effectless and omittable MAC percentages.")
    p.add_argument("model", metavar="MODEL.sacnn")
    _add_input_source(p, default_count=8)
    p.add_argument("-o", "--output", required=True, metavar="OUT.csv")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("profile", help="collect early-exit trigger CDFs",
                       description="Profile trigger steps per layer/channel.")
    p.add_argument("model", metavar="MODEL.sacnn")
    _add_input_source(p, default_count=32)
    p.add_argument("-o", "--output", required=True, metavar="OUT.prof.json")
    p.set_defaults(func=cmd_profile)

    p = sub.add_parser("plan", help="select check positions and build a plan",
                       description="Build an execution plan from a profile.")
    p.add_argument("model", metavar="MODEL.sacnn")
    p.add_argument("--profile", required=True, metavar="PROF.prof.json")
    p.add_argument("--max-checks", type=int, default=2)
    p.add_argument("--check-cost", type=float, default=4.0,
                   help="cost of one check in MAC-equivalents (default 4.0)")
    p.add_argument("--every-step", action="store_true",
                   help="instrument every position instead of selecting")
    p.add_argument("-o", "--output", required=True, metavar="OUT.plan.json")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("run", help="run one inference",
                       description="Run a single input through the model.")
    p.add_argument("model", metavar="MODEL.sacnn")
    p.add_argument("--plan", metavar="PLAN.plan.json")
    p.add_argument("--mode", choices=("baseline", "sat"),
                   help="default: sat when --plan is given, else baseline")
    p.add_argument("--input", metavar="X.sact", help="input tensor")
    p.add_argument("--seed", type=int, default=0,
                   help="generate the input from this seed when --input is absent")
    p.add_argument("--report", metavar="REPORT.csv", help="also write per-layer counters")
    p.add_argument("--no-dynamic-short-circuit", action="store_true",
                   help="do not skip remaining positions after a high-side exit")
    p.add_argument("-o", "--output", required=True, metavar="OUT.sact")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("bench", help="compare sat vs baseline over many inputs",
                       description="Run both modes, verify equality, report savings.")
    p.add_argument("model", metavar="MODEL.sacnn")
    p.add_argument("--plan", required=True, metavar="PLAN.plan.json")
    _add_input_source(p, default_count=100)
    p.add_argument("--no-dynamic-short-circuit", action="store_true")
    p.add_argument("-o", "--output", metavar="REPORT.csv",
                   help="default: MODEL path with .report.csv suffix")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("trace", help="dump one neuron's accumulation trace",
                       description="Trace reordered accumulation with envelopes.")
    p.add_argument("model", metavar="MODEL.sacnn")
    p.add_argument("--plan", metavar="PLAN.plan.json")
    p.add_argument("--neuron", required=True, metavar="LAYER:CHANNEL:Y:X")
    p.add_argument("--input", metavar="X.sact")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output", required=True, metavar="OUT.csv")
    p.set_defaults(func=cmd_trace)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 1
    except (FormatError, PlanMismatchError, ValidationError, InvalidRatioError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except InvariantViolation as e:
        print(f"internal invariant violated: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
