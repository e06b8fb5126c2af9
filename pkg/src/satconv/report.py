"""Delimited reports and companion figures.

Every CSV writer here has a figure twin rendering the same data to a PNG next
to the delimited file (Agg backend, no display needed). Number formatting is
fixed-width so repeated runs produce byte-identical artifacts.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .model import Model
from .sat_exec import ExecCounters, TraceRow
from .sat_plan import AccBounds, AnalyzeReport, ProfileCdf

TRACE_HEADER = ["step", "orig_index", "w", "x", "acc", "env_lo", "env_hi", "check_fired"]
REPORT_HEADER = ["layer", "kind", "macs_total", "macs_executed", "macs_omitted",
                 "checks_executed", "exits_low", "exits_high", "exits_dyn"]
ANALYZE_HEADER = ["layer", "kind", "neurons", "macs_total", "effectless_pct",
                  "omittable_ordered_pct", "omittable_unordered_pct"]


def _pct(v: float) -> str:
    return f"{v:.4f}"


def figure_path(csv_path: str | Path) -> Path:
    return Path(csv_path).with_suffix(".png")


def write_trace_csv(rows: list[TraceRow], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_HEADER)
        for r in rows:
            w.writerow([r.step, r.orig_index, r.w, r.x, r.acc, r.env_lo, r.env_hi,
                        int(r.check_fired)])


def write_report_csv(layer_counters: dict[int, ExecCounters], model: Model,
                     path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(REPORT_HEADER)
        total = ExecCounters()
        for li in range(len(model.layers)):
            c = layer_counters.get(li, ExecCounters())
            total.merge(c)
            w.writerow([li, model.layers[li].kind, c.macs_total, c.macs_executed,
                        c.macs_omitted, c.checks_executed, c.early_exits_low,
                        c.early_exits_high, c.early_exits_dynamic])
        w.writerow(["total", "", total.macs_total, total.macs_executed,
                    total.macs_omitted, total.checks_executed, total.early_exits_low,
                    total.early_exits_high, total.early_exits_dynamic])


def write_analyze_csv(report: AnalyzeReport, model: Model, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(ANALYZE_HEADER)
        for r in report.rows:
            w.writerow([r.layer_index, r.kind, r.neurons, r.macs_total,
                        _pct(r.pct(r.effectless)), _pct(r.pct(r.omittable_ordered)),
                        _pct(r.pct(r.omittable_unordered))])
        t = report.totals
        w.writerow(["total", "", t.neurons, t.macs_total, _pct(t.pct(t.effectless)),
                    _pct(t.pct(t.omittable_ordered)), _pct(t.pct(t.omittable_unordered))])


# ---------------------------------------------------------------------------
# Figures


def render_trace_figure(rows: list[TraceRow], bounds: AccBounds, path: str | Path,
                        title: str = "accumulation trace") -> None:
    steps = [r.step for r in rows]
    fig, ax = plt.subplots(figsize=(7, 4.2))
    ax.fill_between(steps, [r.env_lo for r in rows], [r.env_hi for r in rows],
                    alpha=0.25, color="tab:blue", label="possible final range")
    ax.plot(steps, [r.acc for r in rows], color="tab:blue", lw=1.5, label="accumulator")
    if bounds.a_lo is not None:
        ax.axhline(bounds.a_lo, color="tab:red", ls="--", lw=1, label="low boundary")
    if bounds.a_hi is not None:
        ax.axhline(bounds.a_hi, color="tab:orange", ls="--", lw=1, label="high boundary")
    fired = [r.step for r in rows if r.check_fired]
    if fired:
        ax.scatter(fired, [rows[s - 1].acc for s in fired], marker="v", color="tab:red",
                   zorder=5, label="check fires")
    ax.set_xlabel("reordered step")
    ax.set_ylabel("accumulator value")
    ax.set_title(title)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def render_profile_figure(profiles: dict[int, ProfileCdf], model: Model,
                          path: str | Path) -> None:
    fig, ax = plt.subplots(figsize=(7, 4.2))
    for li in sorted(profiles):
        p = profiles[li]
        if p.m < 2:
            continue
        mean_cdf = p.cdf.mean(axis=0)
        xs = np.arange(1, p.m) / p.m
        label = f"layer {li} ({model.layers[li].kind}, m={p.m})"
        if p.fused_dynamic:
            label += " [dyn]"
        ax.plot(xs, 100.0 * mean_cdf, lw=1.5, label=label)
    ax.set_xlabel("fraction of kernel executed")
    ax.set_ylabel("neuron computations exited (%)")
    ax.set_ylim(-2, 102)
    ax.set_title("early-exit trigger CDF (channel mean)")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def render_analyze_figure(report: AnalyzeReport, model: Model, path: str | Path) -> None:
    rows = report.rows + [report.totals]
    labels = [f"L{r.layer_index}\n{r.kind}" if r.layer_index >= 0 else "total"
              for r in rows]
    xs = np.arange(len(rows))
    width = 0.27
    fig, ax = plt.subplots(figsize=(7, 4.2))
    ax.bar(xs - width, [r.pct(r.effectless) for r in rows], width,
           label="effectless in hindsight", color="tab:gray")
    ax.bar(xs, [r.pct(r.omittable_ordered) for r in rows], width,
           label="omittable (|w|-ordered)", color="tab:blue")
    ax.bar(xs + width, [r.pct(r.omittable_unordered) for r in rows], width,
           label="omittable (original order)", color="tab:cyan")
    ax.set_xticks(xs, labels, fontsize=8)
    ax.set_ylabel("% of MACs")
    ax.set_title("saturation headroom per layer")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def render_report_figure(layer_counters: dict[int, ExecCounters], model: Model,
                         path: str | Path, subtitle: str = "") -> None:
    idxs = [li for li in range(len(model.layers))
            if layer_counters.get(li, ExecCounters()).macs_total > 0]
    omitted = []
    check_pct = []
    for li in idxs:
        c = layer_counters[li]
        omitted.append(100.0 * c.macs_omitted / c.macs_total)
        check_pct.append(100.0 * c.checks_executed / c.macs_total)
    labels = [f"L{li}\n{model.layers[li].kind}" for li in idxs]
    xs = np.arange(len(idxs))
    fig, ax = plt.subplots(figsize=(7, 4.2))
    ax.bar(xs - 0.2, omitted, 0.4, label="MACs omitted", color="tab:green")
    ax.bar(xs + 0.2, check_pct, 0.4, label="checks run (per MAC)", color="tab:orange")
    ax.set_xticks(xs, labels, fontsize=8)
    ax.set_ylabel("% of layer MACs")
    title = "omitted work per layer"
    if subtitle:
        title += f" ({subtitle})"
    ax.set_title(title)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
