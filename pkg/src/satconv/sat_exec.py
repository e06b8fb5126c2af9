"""Saturation-aware kernel execution.

Runs convolution-like layers in reordered-tap order with mid-kernel exit
checks from a plan, counts executed/omitted MACs, fuses a convolution into a
following global spatial max with a dynamically rising lower bound, and
compares everything against the always-run-everything reference kernels. All
paths are bit-exact with the reference: an exit only fires when the final
requantized value is already certain.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvariantViolation, PlanMismatchError, ValidationError
from .model import CONV_KINDS, LayerSpec, Model
from .quant import QuantTensor, RequantParams, requantize, requantize_array
from .ref_kernels import dw_channel_columns, layer_patches, layer_ref
from .sat_plan import (AccBounds, ChannelPlan, KernelPlan, LayerPlan, acc_boundaries,
                       build_redirection, deviation_tables, x_range)


@dataclass
class ExecCounters:
    """MAC/check accounting for one layer (or an aggregate)."""

    macs_total: int = 0
    macs_executed: int = 0
    macs_omitted: int = 0
    checks_executed: int = 0
    early_exits_low: int = 0
    early_exits_high: int = 0
    early_exits_dynamic: int = 0
    neurons_total: int = 0

    def merge(self, other: "ExecCounters") -> None:
        self.macs_total += other.macs_total
        self.macs_executed += other.macs_executed
        self.macs_omitted += other.macs_omitted
        self.checks_executed += other.checks_executed
        self.early_exits_low += other.early_exits_low
        self.early_exits_high += other.early_exits_high
        self.early_exits_dynamic += other.early_exits_dynamic
        self.neurons_total += other.neurons_total

    def check(self) -> None:
        if self.macs_executed + self.macs_omitted != self.macs_total:
            raise InvariantViolation("counter conservation violated: executed + omitted != total")
        exits = self.early_exits_low + self.early_exits_high + self.early_exits_dynamic
        if exits > self.neurons_total:
            raise InvariantViolation("more early exits than neurons")

    @property
    def exits(self) -> int:
        return self.early_exits_low + self.early_exits_high + self.early_exits_dynamic


@dataclass(frozen=True)
class SatDotResult:
    output: int | None      # int8 value, or None for a fused skip (cannot affect max)
    steps: int              # MACs executed
    exit_kind: str          # none | low | high | dynamic
    acc: int | None         # final accumulator when fully computed, else None


def _classify_low(acc_plus_dmax: int, static_lo: int) -> str:
    return "low" if acc_plus_dmax <= static_lo else "dynamic"


def sat_dot(patch_row: np.ndarray, weights: np.ndarray, bias: int, zx: int,
            cp: ChannelPlan, dyn_bound: int | None, counters: ExecCounters,
            params: RequantParams, force_impl: int | None = None) -> SatDotResult:
    """One output neuron in reordered order with early-exit checks.

    The low exit compares against max(static bound, dyn_bound) when a dynamic
    bound is supplied (fused reduce-max); an exit past only the dynamic bound
    reports exit_kind "dynamic" and output None, meaning the true value is
    irrelevant to the running max. Specialized bodies exist for 0, 1, 2, and
    arbitrarily many checks; force_impl pins one for testing.
    """
    m = cp.m
    if len(patch_row) != m or len(weights) != m:
        raise PlanMismatchError(f"plan m={m} does not match data length {len(patch_row)}")
    n = len(cp.checks) if force_impl is None else force_impl
    if n == 0:
        return _sat_dot_0(patch_row, weights, bias, zx, cp, dyn_bound, counters, params)
    if n == 1:
        return _sat_dot_1(patch_row, weights, bias, zx, cp, dyn_bound, counters, params)
    if n == 2:
        return _sat_dot_2(patch_row, weights, bias, zx, cp, dyn_bound, counters, params)
    return _sat_dot_k(patch_row, weights, bias, zx, cp, dyn_bound, counters, params)


def _mac_segment(acc: int, x: list, w: list, redir: list, zx: int, start: int, stop: int) -> int:
    for t in range(start, stop):
        r = redir[t]
        acc += w[r] * (x[r] - zx)
    return acc


def _finish(acc: int, m: int, steps_checks: int, counters: ExecCounters,
            params: RequantParams) -> SatDotResult:
    counters.neurons_total += 1
    counters.macs_total += m
    counters.macs_executed += m
    counters.checks_executed += steps_checks
    return SatDotResult(output=int(requantize(acc, params)), steps=m, exit_kind="none", acc=acc)


def _exit(kind: str, pos: int, m: int, checks_run: int, counters: ExecCounters,
          params: RequantParams, fused: bool) -> SatDotResult:
    counters.neurons_total += 1
    counters.macs_total += m
    counters.macs_executed += pos
    counters.macs_omitted += m - pos
    counters.checks_executed += checks_run
    if kind == "low":
        counters.early_exits_low += 1
        out = None if fused else int(params.q_lo)
    elif kind == "dynamic":
        counters.early_exits_dynamic += 1
        out = None
    else:
        counters.early_exits_high += 1
        out = int(params.q_hi)
    return SatDotResult(output=out, steps=pos, exit_kind=kind, acc=None)


def _sat_dot_0(patch_row, weights, bias, zx, cp, dyn_bound, counters, params):
    x, w, redir = patch_row.tolist(), weights.tolist(), cp.redirection.tolist()
    acc = _mac_segment(int(bias), x, w, redir, zx, 0, cp.m)
    return _finish(acc, cp.m, 0, counters, params)


def _sat_dot_1(patch_row, weights, bias, zx, cp, dyn_bound, counters, params):
    x, w, redir = patch_row.tolist(), weights.tolist(), cp.redirection.tolist()
    m = cp.m
    static_lo, hi = cp.bounds.lo_eff, cp.bounds.hi_eff
    lo = static_lo if dyn_bound is None else max(static_lo, dyn_bound)
    fused = dyn_bound is not None
    c = cp.checks[0]
    acc = _mac_segment(int(bias), x, w, redir, zx, 0, c.pos)
    if acc + c.d_max <= lo:
        return _exit(_classify_low(acc + c.d_max, static_lo), c.pos, m, 1, counters, params, fused)
    if acc + c.d_min >= hi:
        return _exit("high", c.pos, m, 1, counters, params, fused)
    acc = _mac_segment(acc, x, w, redir, zx, c.pos, m)
    return _finish(acc, m, 1, counters, params)


def _sat_dot_2(patch_row, weights, bias, zx, cp, dyn_bound, counters, params):
    x, w, redir = patch_row.tolist(), weights.tolist(), cp.redirection.tolist()
    m = cp.m
    static_lo, hi = cp.bounds.lo_eff, cp.bounds.hi_eff
    lo = static_lo if dyn_bound is None else max(static_lo, dyn_bound)
    fused = dyn_bound is not None
    c0, c1 = cp.checks[0], cp.checks[1]
    acc = _mac_segment(int(bias), x, w, redir, zx, 0, c0.pos)
    if acc + c0.d_max <= lo:
        return _exit(_classify_low(acc + c0.d_max, static_lo), c0.pos, m, 1, counters, params, fused)
    if acc + c0.d_min >= hi:
        return _exit("high", c0.pos, m, 1, counters, params, fused)
    acc = _mac_segment(acc, x, w, redir, zx, c0.pos, c1.pos)
    if acc + c1.d_max <= lo:
        return _exit(_classify_low(acc + c1.d_max, static_lo), c1.pos, m, 2, counters, params, fused)
    if acc + c1.d_min >= hi:
        return _exit("high", c1.pos, m, 2, counters, params, fused)
    acc = _mac_segment(acc, x, w, redir, zx, c1.pos, m)
    return _finish(acc, m, 2, counters, params)


def _sat_dot_k(patch_row, weights, bias, zx, cp, dyn_bound, counters, params):
    x, w, redir = patch_row.tolist(), weights.tolist(), cp.redirection.tolist()
    m = cp.m
    static_lo, hi = cp.bounds.lo_eff, cp.bounds.hi_eff
    lo = static_lo if dyn_bound is None else max(static_lo, dyn_bound)
    fused = dyn_bound is not None
    acc = int(bias)
    done = 0
    for i, c in enumerate(cp.checks):
        acc = _mac_segment(acc, x, w, redir, zx, done, c.pos)
        done = c.pos
        if acc + c.d_max <= lo:
            return _exit(_classify_low(acc + c.d_max, static_lo), done, m, i + 1,
                         counters, params, fused)
        if acc + c.d_min >= hi:
            return _exit("high", done, m, i + 1, counters, params, fused)
    acc = _mac_segment(acc, x, w, redir, zx, done, m)
    return _finish(acc, m, len(cp.checks), counters, params)


# ---------------------------------------------------------------------------
# Vectorized per-layer execution


def _channel_sat_columns(cols: np.ndarray, w: np.ndarray, bias: int, cp: ChannelPlan,
                         params: RequantParams, counters: ExecCounters) -> np.ndarray:
    """All positions of one instrumented channel at once (static bounds)."""
    n_pos, m = cols.shape
    redir = cp.redirection
    csum = np.cumsum(cols[:, redir] * w[redir].astype(np.int64), axis=1)
    lo, hi = cp.bounds.lo_eff, cp.bounds.hi_eff
    out = np.empty(n_pos, dtype=np.int8)
    steps = np.full(n_pos, m, dtype=np.int64)
    active = np.ones(n_pos, dtype=bool)
    n_checks_run = 0
    for c in cp.checks:
        n_checks_run += int(active.sum())
        acc = int(bias) + csum[:, c.pos - 1]
        low = active & (acc + c.d_max <= lo)
        high = active & ~low & (acc + c.d_min >= hi)
        out[low] = params.q_lo
        out[high] = params.q_hi
        steps[low] = c.pos
        steps[high] = c.pos
        counters.early_exits_low += int(low.sum())
        counters.early_exits_high += int(high.sum())
        active &= ~(low | high)
        if not active.any():
            break
    if active.any():
        final = int(bias) + csum[active, m - 1]
        out[active] = requantize_array(final, params)
    counters.neurons_total += n_pos
    counters.macs_total += n_pos * m
    counters.macs_executed += int(steps.sum())
    counters.macs_omitted += n_pos * m - int(steps.sum())
    counters.checks_executed += n_checks_run
    return out


def _channel_passthrough(cols: np.ndarray, w: np.ndarray, bias: int,
                         params: RequantParams, counters: ExecCounters) -> np.ndarray:
    n_pos, m = cols.shape
    acc = cols @ w.astype(np.int64) + int(bias)
    counters.neurons_total += n_pos
    counters.macs_total += n_pos * m
    counters.macs_executed += n_pos * m
    return requantize_array(acc, params)


def conv2d_sat(x: QuantTensor, layer: LayerSpec, lp: LayerPlan,
               counters: ExecCounters) -> QuantTensor:
    """Saturation-aware conv2d/dwconv2d/fully_connected over one input."""
    out_raw = conv_like_sat(x.data[0], layer, lp, counters)
    return QuantTensor(data=out_raw[np.newaxis, ...], scale=layer.out_scale,
                       zero_point=layer.out_zp)


def conv_like_sat(x_raw: np.ndarray, layer: LayerSpec, lp: LayerPlan,
                  counters: ExecCounters) -> np.ndarray:
    if layer.kind not in CONV_KINDS:
        raise PlanMismatchError(f"saturation kernels cover {CONV_KINDS}, got {layer.kind}")
    if len(lp.channels) != layer.out_channels:
        raise PlanMismatchError("plan channel count does not match layer")
    if (lp.x_lo, lp.x_hi) != x_range(layer):
        raise PlanMismatchError("plan x-range does not match layer input quantization")
    patches = layer_patches(x_raw, layer)
    oh, ow, _ = layer.out_shape
    n_out = layer.out_channels
    out = np.empty((patches.shape[0], n_out), dtype=np.int8)
    for ch in range(n_out):
        cols = (dw_channel_columns(patches, n_out, ch)
                if layer.kind == "dwconv2d" else patches)
        w = layer.weights[ch]
        bias = int(layer.bias[ch])
        cp = lp.channels[ch]
        if cp is None:
            out[:, ch] = _channel_passthrough(cols, w, bias, layer.requant[ch], counters)
        else:
            if cp.m != cols.shape[1]:
                raise PlanMismatchError(f"channel {ch}: plan m={cp.m}, layer m={cols.shape[1]}")
            out[:, ch] = _channel_sat_columns(cols, w, bias, cp, layer.requant[ch], counters)
    return out.reshape(oh, ow, n_out)


def conv_reduce_max_fused(x: QuantTensor, conv_layer: LayerSpec, lp: LayerPlan,
                          counters: ExecCounters,
                          high_short_circuit: bool = True) -> QuantTensor:
    out_raw = conv_reduce_max_fused_raw(x.data[0], conv_layer, lp, counters,
                                        high_short_circuit)
    return QuantTensor(data=out_raw[np.newaxis, ...], scale=conv_layer.out_scale,
                       zero_point=conv_layer.out_zp)


def conv_reduce_max_fused_raw(x_raw: np.ndarray, conv_layer: LayerSpec, lp: LayerPlan,
                              counters: ExecCounters,
                              high_short_circuit: bool = True) -> np.ndarray:
    """Convolution fused into a global spatial max, (1, 1, C) output.

    Per channel, positions run row-major while a best-so-far accumulator B
    (starting at the low boundary) acts as a rising lower bound: positions
    whose envelope cannot exceed B are dropped without resolving their value.
    A high-side exit proves the channel max; with high_short_circuit the
    remaining positions are skipped outright.
    """
    if conv_layer.kind not in CONV_KINDS:
        raise PlanMismatchError(f"fused kernel needs a convolution-like layer, got {conv_layer.kind}")
    if not lp.fused_reduce_max:
        raise PlanMismatchError("layer plan is not flagged for fused reduce-max")
    if len(lp.channels) != conv_layer.out_channels:
        raise PlanMismatchError("plan channel count does not match layer")
    patches = layer_patches(x_raw, conv_layer)
    n_pos = patches.shape[0]
    n_out = conv_layer.out_channels
    out = np.empty((1, 1, n_out), dtype=np.int8)
    for ch in range(n_out):
        cols = (dw_channel_columns(patches, n_out, ch)
                if conv_layer.kind == "dwconv2d" else patches)
        w = conv_layer.weights[ch]
        bias = int(conv_layer.bias[ch])
        params = conv_layer.requant[ch]
        cp = lp.channels[ch]
        m = cols.shape[1]
        if cp is None:
            acc = cols @ w.astype(np.int64) + bias
            counters.neurons_total += n_pos
            counters.macs_total += n_pos * m
            counters.macs_executed += n_pos * m
            out[0, 0, ch] = requantize(int(acc.max()), params)
            continue
        if cp.m != m:
            raise PlanMismatchError(f"channel {ch}: plan m={cp.m}, layer m={m}")
        csum = np.cumsum(cols[:, cp.redirection] * w[cp.redirection].astype(np.int64), axis=1)
        static_lo, hi = cp.bounds.lo_eff, cp.bounds.hi_eff
        best = static_lo
        saw_high = False
        for pos in range(n_pos):
            if saw_high and high_short_circuit:
                counters.neurons_total += 1
                counters.macs_total += m
                counters.macs_omitted += m
                continue
            counters.neurons_total += 1
            counters.macs_total += m
            exited = False
            for i, c in enumerate(cp.checks):
                acc = int(bias) + int(csum[pos, c.pos - 1])
                counters.checks_executed += 1
                if acc + c.d_max <= best:
                    if acc + c.d_max <= static_lo:
                        counters.early_exits_low += 1
                    else:
                        counters.early_exits_dynamic += 1
                    counters.macs_executed += c.pos
                    counters.macs_omitted += m - c.pos
                    exited = True
                    break
                if acc + c.d_min >= hi:
                    counters.early_exits_high += 1
                    counters.macs_executed += c.pos
                    counters.macs_omitted += m - c.pos
                    saw_high = True
                    if not high_short_circuit:
                        best = max(best, hi)
                    exited = True
                    break
            if not exited:
                counters.macs_executed += m
                best = max(best, int(bias) + int(csum[pos, m - 1]))
        out[0, 0, ch] = params.q_hi if saw_high else requantize(best, params)
    return out


# ---------------------------------------------------------------------------
# Whole-model execution


@dataclass
class ExecReport:
    mode: str
    check_cost: float
    layer_counters: dict[int, ExecCounters] = field(default_factory=dict)

    def counters_for(self, layer_index: int) -> ExecCounters:
        return self.layer_counters.setdefault(layer_index, ExecCounters())

    @property
    def totals(self) -> ExecCounters:
        agg = ExecCounters()
        for c in self.layer_counters.values():
            agg.merge(c)
        return agg

    @property
    def estimated_saving(self) -> float:
        t = self.totals
        if t.macs_total == 0:
            return 0.0
        return (t.macs_omitted - self.check_cost * t.checks_executed) / t.macs_total

    @property
    def omitted_pct(self) -> float:
        t = self.totals
        return 100.0 * t.macs_omitted / t.macs_total if t.macs_total else 0.0


def run_inference(model: Model, plan: KernelPlan | None, x: QuantTensor, mode: str,
                  high_short_circuit: bool = True,
                  keep_intermediates: bool = False):
    """Execute the chain in baseline or sat mode.

    Returns (output QuantTensor, ExecReport, intermediates) where
    intermediates is a list of (layer_index, raw array) for every tensor the
    run materializes; a fused conv+reduce_max pair materializes only the
    reduced tensor, recorded at the reduce layer's index.
    """
    if mode not in ("baseline", "sat"):
        raise ValidationError(f"mode must be 'baseline' or 'sat', got {mode!r}")
    if mode == "sat":
        if plan is None:
            raise PlanMismatchError("sat mode requires a plan")
        plan.validate_against(model)
    model.check_input(x)
    report = ExecReport(mode=mode, check_cost=plan.check_cost if plan else 0.0)
    inters: list[tuple[int, np.ndarray]] = []
    cur = x.data[0]
    li = 0
    while li < len(model.layers):
        layer = model.layers[li]
        counters = report.counters_for(li)
        lp = plan.layer_plan(li) if (mode == "sat" and plan is not None) else None
        if lp is not None and lp.fused_reduce_max:
            cur = conv_reduce_max_fused_raw(cur, layer, lp, counters, high_short_circuit)
            li += 1  # consume the reduce_max layer as well
            report.counters_for(li)
            if keep_intermediates:
                inters.append((li, cur))
        elif lp is not None:
            cur = conv_like_sat(cur, layer, lp, counters)
            if keep_intermediates:
                inters.append((li, cur))
        else:
            cur = layer_ref(cur, layer)
            if layer.kind in CONV_KINDS:
                n_neurons = cur.shape[0] * cur.shape[1] * cur.shape[2]
                counters.neurons_total += n_neurons
                counters.macs_total += n_neurons * layer.m
                counters.macs_executed += n_neurons * layer.m
            if keep_intermediates:
                inters.append((li, cur))
        li += 1
    for c in report.layer_counters.values():
        c.check()
    last = model.layers[-1]
    out = QuantTensor(data=cur[np.newaxis, ...], scale=last.out_scale, zero_point=last.out_zp)
    return out, report, inters


@dataclass
class InputComparison:
    equal: bool
    omitted_pct: float
    estimated_saving: float


@dataclass
class ComparisonReport:
    per_input: list[InputComparison]
    layer_counters: dict[int, ExecCounters]
    check_cost: float

    @property
    def n_equal(self) -> int:
        return sum(1 for r in self.per_input if r.equal)

    @property
    def all_equal(self) -> bool:
        return self.n_equal == len(self.per_input)

    @property
    def mean_omitted_pct(self) -> float:
        return sum(r.omitted_pct for r in self.per_input) / len(self.per_input)

    @property
    def max_omitted_pct(self) -> float:
        return max(r.omitted_pct for r in self.per_input)

    @property
    def totals(self) -> ExecCounters:
        agg = ExecCounters()
        for c in self.layer_counters.values():
            agg.merge(c)
        return agg


def compare_modes(model: Model, plan: KernelPlan, inputs: np.ndarray,
                  high_short_circuit: bool = True) -> ComparisonReport:
    """Run both modes per input and verify every materialized tensor matches."""
    rows: list[InputComparison] = []
    merged: dict[int, ExecCounters] = {}
    for x_raw in inputs:
        t = QuantTensor(data=np.asarray(x_raw, dtype=np.int8)[np.newaxis, ...],
                        scale=model.input_scale, zero_point=model.input_zp)
        out_b, _, inters_b = run_inference(model, None, t, "baseline",
                                           keep_intermediates=True)
        out_s, rep_s, inters_s = run_inference(model, plan, t, "sat",
                                               high_short_circuit=high_short_circuit,
                                               keep_intermediates=True)
        base_by_index = dict(inters_b)
        equal = bool(np.array_equal(out_b.data, out_s.data))
        for idx, tensor in inters_s:
            if not np.array_equal(base_by_index[idx], tensor):
                equal = False
        rows.append(InputComparison(equal=equal, omitted_pct=rep_s.omitted_pct,
                                    estimated_saving=rep_s.estimated_saving))
        for idx, c in rep_s.layer_counters.items():
            merged.setdefault(idx, ExecCounters()).merge(c)
    return ComparisonReport(per_input=rows, layer_counters=merged,
                            check_cost=plan.check_cost)


# ---------------------------------------------------------------------------
# Tracing


@dataclass(frozen=True)
class TraceRow:
    step: int           # 1-based reordered step
    orig_index: int
    w: int
    x: int              # centered input value (x - zx)
    acc: int
    env_lo: int         # acc + d_min[step]
    env_hi: int         # acc + d_max[step]
    check_fired: bool


def trace_neuron(model: Model, plan: KernelPlan | None, x: QuantTensor,
                 layer_index: int, channel: int, y: int, pos_x: int) -> list[TraceRow]:
    """Full m-step trace of one output neuron's reordered accumulation.

    No early exit is taken; rows mark where each configured check's exit
    condition holds. Channels without an instrumented plan are traced with a
    freshly computed redirection and no check marks.
    """
    if not 0 <= layer_index < len(model.layers):
        raise ValidationError(f"layer index {layer_index} out of range")
    layer = model.layers[layer_index]
    if layer.kind not in CONV_KINDS:
        raise ValidationError(f"can only trace convolution-like layers, got {layer.kind}")
    model.check_input(x)
    cur = x.data[0]
    for prev in model.layers[:layer_index]:
        cur = layer_ref(cur, prev)
    oh, ow, oc = layer.out_shape
    if not (0 <= channel < oc and 0 <= y < oh and 0 <= pos_x < ow):
        raise ValidationError(
            f"neuron ({channel}, {y}, {pos_x}) outside layer output {layer.out_shape}")
    patches = layer_patches(cur, layer)
    row = (dw_channel_columns(patches, oc, channel)
           if layer.kind == "dwconv2d" else patches)[y * ow + pos_x]
    w = layer.weights[channel]
    m = layer.m
    cp = None
    if plan is not None:
        lp = plan.layer_plan(layer_index)
        if lp is not None:
            cp = lp.channels[channel]
    if cp is not None:
        redir = cp.redirection
        bounds = cp.bounds
        check_at = {c.pos for c in cp.checks}
    else:
        redir = build_redirection(w)
        bounds = acc_boundaries(layer.requant[channel])
        check_at = set()
    x_lo, x_hi = x_range(layer)
    dev = deviation_tables(w, redir, x_lo, x_hi)
    lo, hi = bounds.lo_eff, bounds.hi_eff
    rows: list[TraceRow] = []
    acc = int(layer.bias[channel])
    for step in range(1, m + 1):
        r = int(redir[step - 1])
        acc += int(w[r]) * int(row[r])  # row is already centered
        env_lo = acc + int(dev.d_min[step])
        env_hi = acc + int(dev.d_max[step])
        fired = step in check_at and (env_hi <= lo or env_lo >= hi)
        rows.append(TraceRow(step=step, orig_index=r, w=int(w[r]), x=int(row[r]),
                             acc=acc, env_lo=env_lo, env_hi=env_hi, check_fired=fired))
    return rows
