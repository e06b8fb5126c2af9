"""Saturation analysis and plan construction.

Offline pipeline for the saturation-aware kernels: map each output channel's
clamp rails into accumulator-domain boundaries, order taps so the largest
|weight| MACs run first, tabulate the worst-case deviation the remaining taps
can still contribute after each step, measure on sample inputs where an early
exit would fire (per-channel CDFs), pick check positions maximizing expected
omitted MACs net of check cost, and serialize the result as a plan the
execution kernels consume.

Deviation-table indexing: arrays here are indexed by the NUMBER OF EXECUTED
reordered MACs k in [0, m], so d_min[k] bounds how far below the current
accumulator the final value can still land after k MACs (d_min[m] = 0). A
check at position j uses d_min[j]/d_max[j].
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, PlanMismatchError, ValidationError
from .io import model_to_dict
from .model import CONV_KINDS, LayerSpec, Model
from .quant import QuantTensor, RequantParams, requantize, requantize_array
from .ref_kernels import dw_channel_columns, layer_patches, layer_ref, run_reference

INT32_MIN = -(2 ** 31)
INT32_MAX = 2 ** 31 - 1

# Stand-ins for unreachable rails inside integer kernels. Accumulators are
# bounded by |bias| + m*255*127 << 2^62, so these never compare true.
LO_EFF = -(2 ** 62)
HI_EFF = 2 ** 62

PLAN_VERSION = 1
PROFILE_VERSION = 1


# ---------------------------------------------------------------------------
# Accumulator-domain boundaries


@dataclass(frozen=True)
class AccBounds:
    """Thresholds past which requantization provably emits a clamp rail.

    a_lo is the largest accumulator still mapping to q_lo, a_hi the smallest
    mapping to q_hi. None means the rail is unreachable from int32
    accumulators and the corresponding exit can never fire.
    """

    a_lo: int | None
    a_hi: int | None

    @property
    def lo_eff(self) -> int:
        return LO_EFF if self.a_lo is None else self.a_lo

    @property
    def hi_eff(self) -> int:
        return HI_EFF if self.a_hi is None else self.a_hi


def acc_boundaries(p: RequantParams) -> AccBounds:
    """Invert the monotone requantize map at both clamp rails."""
    if p.q_lo == p.q_hi:
        raise ValidationError("degenerate clamp q_lo == q_hi: channel output is constant")
    a_lo: int | None
    a_hi: int | None
    if requantize(INT32_MIN, p) != p.q_lo:
        a_lo = None
    else:
        lo, hi = INT32_MIN, INT32_MAX
        while lo < hi:
            mid = (lo + hi + 1) // 2
            if requantize(mid, p) == p.q_lo:
                lo = mid
            else:
                hi = mid - 1
        a_lo = lo
    if requantize(INT32_MAX, p) != p.q_hi:
        a_hi = None
    else:
        lo, hi = INT32_MIN, INT32_MAX
        while lo < hi:
            mid = (lo + hi) // 2
            if requantize(mid, p) == p.q_hi:
                hi = mid
            else:
                lo = mid + 1
        a_hi = lo
    return AccBounds(a_lo=a_lo, a_hi=a_hi)


# ---------------------------------------------------------------------------
# Tap reordering and deviation envelopes


def build_redirection(weights_slice: np.ndarray) -> np.ndarray:
    """Permutation listing tap indices by |weight| descending, ties by index.

    Weights are widened before abs(): |int8 -128| overflows int8.
    """
    mags = np.abs(np.asarray(weights_slice, dtype=np.int64))
    return np.argsort(-mags, kind="stable").astype(np.int32)


@dataclass(frozen=True)
class DeviationTable:
    """Extreme remaining-contribution sums after k executed reordered MACs.

    After k MACs the final accumulator lies in
    [acc_k + d_min[k], acc_k + d_max[k]] for any inputs within [x_lo, x_hi].
    """

    d_min: np.ndarray  # int64, length m+1
    d_max: np.ndarray  # int64, length m+1
    x_lo: int
    x_hi: int

    @property
    def m(self) -> int:
        return len(self.d_min) - 1


def deviation_tables(weights_slice: np.ndarray, redirection: np.ndarray,
                     x_lo: int, x_hi: int) -> DeviationTable:
    if not x_lo <= 0 <= x_hi:
        raise ValidationError(f"input range [{x_lo}, {x_hi}] must straddle 0")
    if len(weights_slice) != len(redirection):
        raise ValidationError("redirection length does not match weights")
    w = np.asarray(weights_slice, dtype=np.int64)[np.asarray(redirection)]
    lo_terms = np.where(w >= 0, x_lo * w, x_hi * w)
    hi_terms = np.where(w >= 0, x_hi * w, x_lo * w)
    # suffix sums: d[k] = sum of terms for steps k..m-1, d[m] = 0
    d_min = np.append(np.cumsum(lo_terms[::-1])[::-1], 0)
    d_max = np.append(np.cumsum(hi_terms[::-1])[::-1], 0)
    return DeviationTable(d_min=d_min, d_max=d_max, x_lo=x_lo, x_hi=x_hi)


def x_range(layer: LayerSpec) -> tuple[int, int]:
    """Extreme centered input values for a layer's accumulation."""
    return -128 - layer.in_zp, 127 - layer.in_zp


# ---------------------------------------------------------------------------
# Trigger simulation and retrospective metrics


def earliest_trigger(weights: np.ndarray, redirection: np.ndarray, dev: DeviationTable,
                     patch_row: np.ndarray, bias: int, zx: int,
                     bounds: AccBounds) -> int | None:
    """Smallest step count j in [1, m-1] at which an exit condition holds.

    Simulates reordered accumulation from bias and tests, after each of the
    first m-1 MACs, whether the envelope [acc + d_min, acc + d_max] has left
    the open interval (a_lo, a_hi). Returns None when no step triggers.
    """
    m = len(weights)
    if len(patch_row) != m or len(redirection) != m or dev.m != m:
        raise ValidationError("weights, patch, redirection, and table lengths differ")
    lo, hi = bounds.lo_eff, bounds.hi_eff
    acc = int(bias)
    for j in range(1, m):
        r = int(redirection[j - 1])
        acc += int(weights[r]) * (int(patch_row[r]) - zx)
        if acc + int(dev.d_max[j]) <= lo or acc + int(dev.d_min[j]) >= hi:
            return j
    return None


def effectless_suffix(weights: np.ndarray, patch_row: np.ndarray, bias: int,
                      zx: int, requant: RequantParams) -> int:
    """Hindsight count of trailing original-order MACs with no output effect.

    Largest k such that stopping after m-k, m-k+1, ..., m MACs all requantize
    to the same value the full accumulation produces.
    """
    m = len(weights)
    if len(patch_row) != m:
        raise ValidationError("weights and patch lengths differ")
    accs = np.empty(m + 1, dtype=np.int64)
    accs[0] = int(bias)
    contrib = np.asarray(weights, dtype=np.int64) * (np.asarray(patch_row, dtype=np.int64) - zx)
    accs[1:] = int(bias) + np.cumsum(contrib)
    outs = requantize_array(accs, requant)
    final = outs[m]
    k = 0
    for t in range(m - 1, -1, -1):
        if outs[t] != final:
            break
        k += 1
    return k


def _acc_cumsum(cols: np.ndarray, w_perm: np.ndarray, bias: int) -> np.ndarray:
    """(positions, m+1) accumulator trajectory, column k = acc after k MACs."""
    n, m = cols.shape
    acc = np.empty((n, m + 1), dtype=np.int64)
    acc[:, 0] = bias
    np.cumsum(cols * w_perm, axis=1, out=acc[:, 1:])
    acc[:, 1:] += bias
    return acc


def _first_trigger_steps(acc_cum: np.ndarray, dev: DeviationTable,
                         lo_eff: int, hi_eff: int) -> np.ndarray:
    """Vectorized earliest_trigger over many patch rows; m means no trigger."""
    m = acc_cum.shape[1] - 1
    mid = acc_cum[:, 1:m]
    cond = (mid + dev.d_max[1:m] <= lo_eff) | (mid + dev.d_min[1:m] >= hi_eff)
    steps = np.full(acc_cum.shape[0], m, dtype=np.int64)
    any_trig = cond.any(axis=1)
    steps[any_trig] = np.argmax(cond[any_trig], axis=1) + 1
    return steps


def _effectless_counts(acc_cum: np.ndarray, requant: RequantParams) -> np.ndarray:
    """Vectorized effectless_suffix over many patch rows (original order)."""
    m = acc_cum.shape[1] - 1
    outs = requantize_array(acc_cum, requant)
    neq = outs[:, :m] != outs[:, m:m + 1]
    any_neq = neq.any(axis=1)
    last_neq = m - 1 - np.argmax(neq[:, ::-1], axis=1)
    first_stable = np.where(any_neq, last_neq + 1, 0)
    return m - first_stable


@dataclass
class AnalyzeRow:
    layer_index: int
    kind: str
    neurons: int
    macs_total: int
    effectless: int
    omittable_ordered: int
    omittable_unordered: int

    def pct(self, value: int) -> float:
        return 100.0 * value / self.macs_total if self.macs_total else 0.0


@dataclass
class AnalyzeReport:
    rows: list[AnalyzeRow]

    @property
    def totals(self) -> AnalyzeRow:
        t = AnalyzeRow(-1, "total", 0, 0, 0, 0, 0)
        for r in self.rows:
            t.neurons += r.neurons
            t.macs_total += r.macs_total
            t.effectless += r.effectless
            t.omittable_ordered += r.omittable_ordered
            t.omittable_unordered += r.omittable_unordered
        return t


def analyze_stats(model: Model, inputs: np.ndarray) -> AnalyzeReport:
    """Retrospective per-layer saturation metrics over a batch of inputs.

    effectless counts trailing original-order MACs that provably had no
    effect in hindsight; omittable counts MACs past the earliest
    envelope-trigger step (checks evaluated at every step), with and without
    |w|-descending reordering. Static boundaries only.
    """
    if len(inputs) == 0:
        raise ValidationError("need at least one input")
    rows = [AnalyzeRow(i, model.layers[i].kind, 0, 0, 0, 0, 0)
            for i in range(len(model.layers))]
    identity_cache: dict[int, np.ndarray] = {}
    for x_raw in inputs:
        cur = np.asarray(x_raw)
        for li, layer in enumerate(model.layers):
            if layer.kind in CONV_KINDS:
                row = rows[li]
                patches = layer_patches(cur, layer)
                x_lo, x_hi = x_range(layer)
                m = layer.m
                ident = identity_cache.setdefault(m, np.arange(m, dtype=np.int32))
                for ch in range(layer.out_channels):
                    w = layer.weights[ch]
                    cols = (dw_channel_columns(patches, layer.out_channels, ch)
                            if layer.kind == "dwconv2d" else patches)
                    bias = int(layer.bias[ch])
                    rq = layer.requant[ch]
                    bounds = acc_boundaries(rq)
                    acc_ident = _acc_cumsum(cols, w.astype(np.int64), bias)
                    row.effectless += int(_effectless_counts(acc_ident, rq).sum())
                    dev_i = deviation_tables(w, ident, x_lo, x_hi)
                    steps_u = _first_trigger_steps(acc_ident, dev_i, bounds.lo_eff, bounds.hi_eff)
                    redir = build_redirection(w)
                    dev_r = deviation_tables(w, redir, x_lo, x_hi)
                    acc_r = _acc_cumsum(cols[:, redir], w[redir].astype(np.int64), bias)
                    steps_o = _first_trigger_steps(acc_r, dev_r, bounds.lo_eff, bounds.hi_eff)
                    n_pos = cols.shape[0]
                    row.neurons += n_pos
                    row.macs_total += n_pos * m
                    row.omittable_unordered += int((m - steps_u).sum())
                    row.omittable_ordered += int((m - steps_o).sum())
            cur = layer_ref(cur, layer)
    return AnalyzeReport(rows=[r for r in rows if r.kind in CONV_KINDS])


# ---------------------------------------------------------------------------
# Profiling


@dataclass
class ProfileCdf:
    """Per-channel cumulative trigger-step distribution for one layer.

    cdf[c, j-1] is the fraction of profiled neuron computations of channel c
    whose earliest trigger fired at or before reordered step j. sample_count
    is samples times output positions.
    """

    layer_index: int
    m: int
    sample_count: int
    cdf: np.ndarray  # float64 (n_channels, m-1)
    fused_dynamic: bool = False

    def validate(self) -> None:
        if self.cdf.ndim != 2 or self.cdf.shape[1] != self.m - 1:
            raise ValidationError(f"cdf shape {self.cdf.shape} inconsistent with m={self.m}")
        if np.any(self.cdf < 0) or np.any(self.cdf > 1):
            raise ValidationError("cdf values outside [0, 1]")
        if np.any(np.diff(self.cdf, axis=1) < 0):
            raise ValidationError("cdf must be nondecreasing")


def _is_fused(model: Model, layer_index: int) -> bool:
    return (layer_index + 1 < len(model.layers)
            and model.layers[layer_index + 1].kind == "reduce_max"
            and model.layers[layer_index].kind in CONV_KINDS)


def _profile_one(layer: LayerSpec, layer_inputs: list[np.ndarray],
                 layer_index: int, fused: bool) -> ProfileCdf:
    m = layer.m
    n_ch = layer.out_channels
    counts = np.zeros((n_ch, m - 1), dtype=np.int64) if m > 1 else np.zeros((n_ch, 0), np.int64)
    x_lo, x_hi = x_range(layer)
    n_pos = 0
    for x_raw in layer_inputs:
        patches = layer_patches(x_raw, layer)
        n_pos = patches.shape[0]
        for ch in range(n_ch):
            w = layer.weights[ch]
            cols = (dw_channel_columns(patches, n_ch, ch)
                    if layer.kind == "dwconv2d" else patches)
            bias = int(layer.bias[ch])
            bounds = acc_boundaries(layer.requant[ch])
            redir = build_redirection(w)
            dev = deviation_tables(w, redir, x_lo, x_hi)
            acc = _acc_cumsum(cols[:, redir], w[redir].astype(np.int64), bias)
            if not fused:
                steps = _first_trigger_steps(acc, dev, bounds.lo_eff, bounds.hi_eff)
            else:
                # Dynamic lower bound: walk positions row-major, as execution
                # does; completed positions raise the bar for later ones.
                steps = np.empty(acc.shape[0], dtype=np.int64)
                b_c = bounds.lo_eff
                for pos in range(acc.shape[0]):
                    row = acc[pos]
                    s = _first_trigger_steps(row[np.newaxis, :], dev,
                                             max(bounds.lo_eff, b_c), bounds.hi_eff)[0]
                    steps[pos] = s
                    if s == m:
                        b_c = max(b_c, int(row[m]))
                    elif row[s] + int(dev.d_min[s]) >= bounds.hi_eff:
                        # high-side trigger: final is at least a_hi
                        b_c = max(b_c, bounds.hi_eff)
            trig = steps[steps < m]
            if trig.size:
                np.add.at(counts[ch], trig - 1, 1)
    total = len(layer_inputs) * n_pos
    cdf = np.cumsum(counts, axis=1) / float(total) if total else counts.astype(float)
    prof = ProfileCdf(layer_index=layer_index, m=m, sample_count=total,
                      cdf=cdf, fused_dynamic=fused)
    prof.validate()
    return prof


def profile_model(model: Model, sample_inputs: np.ndarray) -> dict[int, ProfileCdf]:
    """ProfileCdf for every conv-like layer, sharing one reference sweep."""
    if len(sample_inputs) == 0:
        raise ValidationError("need at least one sample input")
    eligible = model.conv_layer_indices()
    layer_inputs: dict[int, list[np.ndarray]] = {li: [] for li in eligible}
    for x_raw in sample_inputs:
        t = QuantTensor(data=np.asarray(x_raw, dtype=np.int8)[np.newaxis, ...],
                        scale=model.input_scale, zero_point=model.input_zp)
        _, inters = run_reference(model, t, keep_intermediates=True)
        for li in eligible:
            layer_inputs[li].append(inters[li - 1] if li > 0 else np.asarray(x_raw))
    return {li: _profile_one(model.layers[li], layer_inputs[li], li, _is_fused(model, li))
            for li in eligible}


def profile_layer(model: Model, layer_index: int, sample_inputs: np.ndarray) -> ProfileCdf:
    if model.layers[layer_index].kind not in CONV_KINDS:
        raise ValidationError(f"layer {layer_index} is {model.layers[layer_index].kind}, "
                              "profiling needs a convolution-like layer")
    return profile_model(model, sample_inputs)[layer_index]


# ---------------------------------------------------------------------------
# Check-position selection


def select_checks(p_row: np.ndarray, m: int, max_checks: int,
                  check_cost: float) -> tuple[tuple[int, ...], float]:
    """Best ascending check positions by expected net omitted MACs.

    Expected gain of positions j_1 < ... < j_n is
    sum_t (m - j_t) * (P[j_t] - P[j_{t-1}]) - sum_t check_cost * (1 - P[j_{t-1}])
    with P[j_0] = 0: a check only runs when no earlier check exited. Ties go
    to the shortest, lexicographically smallest tuple; returns the empty
    tuple when nothing nets a positive gain.
    """
    if max_checks < 0 or check_cost < 0:
        raise ValidationError("max_checks and check_cost must be nonnegative")
    p = np.zeros(m, dtype=np.float64)
    if m > 1:
        p[1:] = np.asarray(p_row, dtype=np.float64)
    best: tuple[int, ...] = ()
    best_gain = 0.0
    for size in range(1, max_checks + 1):
        for tup in itertools.combinations(range(1, m), size):
            gain = 0.0
            prev = 0.0
            for j in tup:
                gain += (m - j) * (p[j] - prev) - check_cost * (1.0 - prev)
                prev = p[j]
            if gain > best_gain:
                best, best_gain = tup, gain
    return best, best_gain


# ---------------------------------------------------------------------------
# Plans


@dataclass(frozen=True)
class CheckPoint:
    pos: int
    d_min: int
    d_max: int


@dataclass
class ChannelPlan:
    redirection: np.ndarray  # int32 permutation, length m
    checks: list[CheckPoint]  # ascending pos in [1, m-1]
    bounds: AccBounds

    @property
    def m(self) -> int:
        return len(self.redirection)

    def validate(self) -> None:
        m = self.m
        perm = np.sort(np.asarray(self.redirection))
        if not np.array_equal(perm, np.arange(m)):
            raise ValidationError("redirection is not a permutation")
        last = 0
        for c in self.checks:
            if not 1 <= c.pos <= m - 1:
                raise ValidationError(f"check position {c.pos} outside [1, {m - 1}]")
            if c.pos <= last:
                raise ValidationError("check positions must be strictly increasing")
            if c.d_min > c.d_max:
                raise ValidationError("check has d_min > d_max")
            last = c.pos
        if (self.bounds.a_lo is not None and self.bounds.a_hi is not None
                and self.bounds.a_lo >= self.bounds.a_hi):
            raise ValidationError("bounds must satisfy a_lo < a_hi")


@dataclass
class LayerPlan:
    layer_index: int
    x_lo: int
    x_hi: int
    fused_reduce_max: bool
    channels: list[ChannelPlan | None]

    @property
    def instrumented(self) -> int:
        return sum(1 for c in self.channels if c is not None)


@dataclass
class KernelPlan:
    model_name: str
    check_cost: float
    max_checks: int
    layers: list[LayerPlan]

    def layer_plan(self, layer_index: int) -> LayerPlan | None:
        for lp in self.layers:
            if lp.layer_index == layer_index:
                return lp
        return None

    def validate_against(self, model: Model) -> None:
        if self.model_name != model.name:
            raise PlanMismatchError(f"plan is for model {self.model_name!r}, got {model.name!r}")
        for lp in self.layers:
            if not 0 <= lp.layer_index < len(model.layers):
                raise PlanMismatchError(f"plan layer index {lp.layer_index} out of range")
            layer = model.layers[lp.layer_index]
            if layer.kind not in CONV_KINDS:
                raise PlanMismatchError(f"plan layer {lp.layer_index} targets {layer.kind}")
            if len(lp.channels) != layer.out_channels:
                raise PlanMismatchError(
                    f"plan layer {lp.layer_index} has {len(lp.channels)} channels, "
                    f"model has {layer.out_channels}")
            if (lp.x_lo, lp.x_hi) != x_range(layer):
                raise PlanMismatchError(f"plan layer {lp.layer_index} x-range mismatch")
            if lp.fused_reduce_max != _is_fused(model, lp.layer_index):
                raise PlanMismatchError(f"plan layer {lp.layer_index} fused flag mismatch")
            for ch, cp in enumerate(lp.channels):
                if cp is None:
                    continue
                cp.validate()
                if cp.m != layer.m:
                    raise PlanMismatchError(
                        f"plan layer {lp.layer_index} channel {ch} has m={cp.m}, "
                        f"layer has m={layer.m}")


@dataclass(frozen=True)
class PlanConfig:
    max_checks: int = 2
    check_cost: float = 4.0
    every_step: bool = False


def build_plan(model: Model, profiles: dict[int, ProfileCdf],
               config: PlanConfig = PlanConfig()) -> KernelPlan:
    """Select per-channel check positions and freeze the execution plan.

    Channels where no position nets a positive expected gain become None
    (pass-through: baseline execution, no reordering). every_step instruments
    every channel at every position regardless of profile, for analysis runs.
    """
    plan_layers: list[LayerPlan] = []
    for li in model.conv_layer_indices():
        layer = model.layers[li]
        prof = profiles.get(li)
        if prof is None:
            raise PlanMismatchError(f"no profile for eligible layer {li} ({layer.kind})")
        if prof.m != layer.m or prof.cdf.shape[0] != layer.out_channels:
            raise PlanMismatchError(f"profile for layer {li} does not match its geometry")
        x_lo, x_hi = x_range(layer)
        m = layer.m
        channels: list[ChannelPlan | None] = []
        for ch in range(layer.out_channels):
            if config.every_step:
                positions: tuple[int, ...] = tuple(range(1, m))
            else:
                positions, _ = select_checks(prof.cdf[ch], m, config.max_checks,
                                             config.check_cost)
            if not positions:
                channels.append(None)
                continue
            w = layer.weights[ch]
            redir = build_redirection(w)
            dev = deviation_tables(w, redir, x_lo, x_hi)
            checks = [CheckPoint(pos=j, d_min=int(dev.d_min[j]), d_max=int(dev.d_max[j]))
                      for j in positions]
            channels.append(ChannelPlan(redirection=redir, checks=checks,
                                        bounds=acc_boundaries(layer.requant[ch])))
        plan_layers.append(LayerPlan(layer_index=li, x_lo=x_lo, x_hi=x_hi,
                                     fused_reduce_max=_is_fused(model, li),
                                     channels=channels))
    plan = KernelPlan(model_name=model.name, check_cost=config.check_cost,
                      max_checks=config.max_checks, layers=plan_layers)
    plan.validate_against(model)
    return plan


# ---------------------------------------------------------------------------
# Serialization


def plan_to_dict(plan: KernelPlan) -> dict:
    layers = []
    for lp in plan.layers:
        channels = []
        for cp in lp.channels:
            if cp is None:
                channels.append(None)
            else:
                channels.append({
                    "redirection": [int(i) for i in cp.redirection],
                    "checks": [{"pos": c.pos, "d_min": c.d_min, "d_max": c.d_max}
                               for c in cp.checks],
                    "a_lo": cp.bounds.a_lo,
                    "a_hi": cp.bounds.a_hi,
                })
        layers.append({"layer_index": lp.layer_index, "x_lo": lp.x_lo, "x_hi": lp.x_hi,
                       "fused_reduce_max": lp.fused_reduce_max, "channels": channels})
    return {"version": PLAN_VERSION, "model_name": plan.model_name,
            "check_cost": plan.check_cost, "max_checks": plan.max_checks,
            "layers": layers}


def plan_from_dict(doc: dict) -> KernelPlan:
    if not isinstance(doc, dict) or doc.get("version") != PLAN_VERSION:
        raise FormatError(f"unsupported plan version {doc.get('version')!r}")
    try:
        layers = []
        for entry in doc["layers"]:
            channels: list[ChannelPlan | None] = []
            for cdoc in entry["channels"]:
                if cdoc is None:
                    channels.append(None)
                    continue
                cp = ChannelPlan(
                    redirection=np.asarray(cdoc["redirection"], dtype=np.int32),
                    checks=[CheckPoint(pos=int(c["pos"]), d_min=int(c["d_min"]),
                                       d_max=int(c["d_max"])) for c in cdoc["checks"]],
                    bounds=AccBounds(
                        a_lo=None if cdoc["a_lo"] is None else int(cdoc["a_lo"]),
                        a_hi=None if cdoc["a_hi"] is None else int(cdoc["a_hi"])))
                cp.validate()
                channels.append(cp)
            layers.append(LayerPlan(layer_index=int(entry["layer_index"]),
                                    x_lo=int(entry["x_lo"]), x_hi=int(entry["x_hi"]),
                                    fused_reduce_max=bool(entry["fused_reduce_max"]),
                                    channels=channels))
        return KernelPlan(model_name=str(doc["model_name"]),
                          check_cost=float(doc["check_cost"]),
                          max_checks=int(doc.get("max_checks", 2)), layers=layers)
    except (KeyError, TypeError, ValueError) as e:
        raise FormatError(f"malformed plan: {e!r}") from None


def save_plan(plan: KernelPlan, path: str | Path) -> None:
    text = json.dumps(plan_to_dict(plan), sort_keys=True, separators=(",", ":"))
    Path(path).write_text(text + "\n", encoding="ascii")


def load_plan(path: str | Path) -> KernelPlan:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as e:
        raise FormatError(f"cannot read {path}: {e}") from None
    except json.JSONDecodeError as e:
        raise FormatError(f"{path}: not valid JSON: {e}") from None
    return plan_from_dict(doc)


def profiles_to_dict(profiles: dict[int, ProfileCdf], model_name: str,
                     generator: dict | None = None) -> dict:
    layers = []
    for li in sorted(profiles):
        p = profiles[li]
        layers.append({"layer_index": p.layer_index, "m": p.m,
                       "sample_count": p.sample_count,
                       "fused_dynamic": p.fused_dynamic,
                       "channels": [[float(v) for v in row] for row in p.cdf]})
    doc = {"version": PROFILE_VERSION, "model_name": model_name, "layers": layers}
    if generator:
        doc["generator"] = generator
    return doc


def profiles_from_dict(doc: dict) -> tuple[dict[int, ProfileCdf], str]:
    if not isinstance(doc, dict) or doc.get("version") != PROFILE_VERSION:
        raise FormatError(f"unsupported profile version {doc.get('version')!r}")
    try:
        out: dict[int, ProfileCdf] = {}
        for entry in doc["layers"]:
            cdf = np.asarray(entry["channels"], dtype=np.float64)
            if cdf.ndim == 1:  # zero channels or empty rows
                cdf = cdf.reshape(len(entry["channels"]), -1)
            p = ProfileCdf(layer_index=int(entry["layer_index"]), m=int(entry["m"]),
                           sample_count=int(entry["sample_count"]), cdf=cdf,
                           fused_dynamic=bool(entry.get("fused_dynamic", False)))
            p.validate()
            out[p.layer_index] = p
        return out, str(doc["model_name"])
    except (KeyError, TypeError, ValueError) as e:
        raise FormatError(f"malformed profile: {e!r}") from None


def save_profiles(profiles: dict[int, ProfileCdf], model_name: str, path: str | Path,
                  generator: dict | None = None) -> None:
    text = json.dumps(profiles_to_dict(profiles, model_name, generator),
                      sort_keys=True, separators=(",", ":"))
    Path(path).write_text(text + "\n", encoding="ascii")


def load_profiles(path: str | Path) -> tuple[dict[int, ProfileCdf], str]:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as e:
        raise FormatError(f"cannot read {path}: {e}") from None
    except json.JSONDecodeError as e:
        raise FormatError(f"{path}: not valid JSON: {e}") from None
    return profiles_from_dict(doc)


def plan_overhead(plan: KernelPlan, model: Model) -> tuple[int, int, float]:
    """(plan_bytes, model_bytes, ratio) using the serialized representations."""
    plan_bytes = len(json.dumps(plan_to_dict(plan), sort_keys=True, separators=(",", ":")))
    model_bytes = len(json.dumps(model_to_dict(model), sort_keys=True, separators=(",", ":")))
    return plan_bytes, model_bytes, plan_bytes / model_bytes
