"""Acceptance gate: every headline guarantee, one test each, one summary line each.

Run with -s (or read captured output) for the PASS lines with measured numbers.
"""

import itertools
import time

import numpy as np
import pytest

from satconv import PRESETS, gen_inputs, gen_synthetic
from satconv.quant import RequantParams, requantize, requantize_array
from satconv.ref_kernels import layer_patches, layer_ref
from satconv.sat_exec import compare_modes
from satconv.sat_plan import (PlanConfig, acc_boundaries, analyze_stats,
                              build_plan, build_redirection, deviation_tables,
                              effectless_suffix, plan_overhead, profile_model,
                              select_checks, x_range)


def _planned(preset, profile_inputs=16, profile_seed=101):
    model = gen_synthetic(preset, seed=0)
    profiles = profile_model(model, gen_inputs(model, profile_inputs, seed=profile_seed))
    return model, build_plan(model, profiles, PlanConfig())


def test_zero_error_equivalence_across_presets():
    t0 = time.monotonic()
    details = []
    for preset in PRESETS:
        model, plan = _planned(preset)
        cmp = compare_modes(model, plan, gen_inputs(model, 100, seed=7))
        assert cmp.all_equal, f"{preset}: {100 - cmp.n_equal} of 100 inputs diverged"
        details.append(f"{preset} 100/100 (omitted {cmp.mean_omitted_pct:.1f}%)")
    elapsed = time.monotonic() - t0
    assert elapsed < 120.0
    print(f"PASS equivalence: {'; '.join(details)}; {elapsed:.1f}s")


def test_check_selection_on_two_plateau_distribution():
    p = np.zeros(17)
    p[6:] = 0.495   # P[7..11]
    p[11:] = 0.801  # P[12..17]
    positions, gain = select_checks(p, 18, 2, 0.0)
    assert positions == (7, 12)
    assert abs(gain - 7.3) <= 0.05
    print(f"PASS check selection: positions {positions}, expected omission {gain:.3f}")


def test_deviation_envelopes_are_sound():
    rng = np.random.default_rng(0xDEC0DE)
    n_total = 0
    for m in range(1, 33):
        n = 100000 // 32 + 1
        W = rng.integers(-128, 128, (n, m)).astype(np.int8)
        X = rng.integers(-128, 128, (n, m)).astype(np.int8)
        ZX = rng.integers(-128, 128, n)
        B = rng.integers(-30000, 30000, n)
        for i in range(n):
            w, x, zx, bias = W[i], X[i], int(ZX[i]), int(B[i])
            redir = build_redirection(w)
            dev = deviation_tables(w, redir, -128 - zx, 127 - zx)
            contrib = w.astype(np.int64)[redir] * (x.astype(np.int64)[redir] - zx)
            acc = bias + np.concatenate(([0], np.cumsum(contrib)))
            final = acc[-1]
            ok = np.all((acc + dev.d_min <= final) & (final <= acc + dev.d_max))
            assert ok, f"envelope violated: w={w.tolist()} x={x.tolist()} zx={zx} bias={bias}"
            n_total += 1
    print(f"PASS envelope soundness: {n_total} random kernels, 0 violations")


def test_reordering_increases_omittable_macs():
    model = gen_synthetic("sat-heavy", seed=0)
    report = analyze_stats(model, gen_inputs(model, 32, seed=13))
    t = report.totals
    ordered = t.pct(t.omittable_ordered)
    unordered = t.pct(t.omittable_unordered)
    assert t.omittable_ordered > t.omittable_unordered
    print(f"PASS reordering benefit: omittable {ordered:.2f}% ordered "
          f"vs {unordered:.2f}% unordered over 32 inputs")


def test_effectless_suffix_matches_definition():
    rng = np.random.default_rng(0xFACADE)
    n_total = 0
    for _ in range(10000):
        m = int(rng.integers(1, 17))
        w = rng.integers(-128, 128, m).astype(np.int8)
        x = rng.integers(-128, 128, m).astype(np.int8)
        zx = int(rng.integers(-128, 128))
        bias = int(rng.integers(-20000, 20000))
        q_lo = int(rng.choice([-128, 0]))
        p = RequantParams.from_ratio(float(rng.uniform(0.05, 2.0)),
                                     zo=int(rng.integers(-30, 31)), q_lo=q_lo)
        # definitional oracle: requantize every truncated prefix separately
        outs = []
        for stop in range(m + 1):
            acc = bias
            for t in range(stop):
                acc += (int(x[t]) - zx) * int(w[t])
            outs.append(requantize(acc, p))
        k = 0
        while k < m and all(o == outs[m] for o in outs[m - k - 1:]):
            k += 1
        assert effectless_suffix(w, x, bias, zx, p) == k
        n_total += 1
    print(f"PASS effectless suffix: {n_total} kernels match the truncation oracle")


def test_clamp_boundaries_invert_requantization():
    rng = np.random.default_rng(0xB0B)
    for _ in range(1000):
        p = RequantParams.from_ratio(float(rng.uniform(0.1, 2.0)),
                                     zo=int(rng.integers(-100, 101)))
        b = acc_boundaries(p)
        assert b.a_lo is not None and b.a_hi is not None
        assert requantize(b.a_lo, p) == p.q_lo
        assert requantize(b.a_lo + 1, p) > p.q_lo
        assert requantize(b.a_hi, p) == p.q_hi
        assert requantize(b.a_hi - 1, p) < p.q_hi
        accs = np.arange(b.a_lo - 512, b.a_hi + 513, dtype=np.int64)
        outs = requantize_array(accs, p)
        assert np.array_equal(outs == p.q_lo, accs <= b.a_lo)
        assert np.array_equal(outs == p.q_hi, accs >= b.a_hi)
    print("PASS boundary inversion: 1000 random quantizations, "
          "exhaustive scan around both rails")


def test_check_selection_is_optimal():
    rng = np.random.default_rng(0x5EED)
    for trial in range(200):
        m = int(rng.integers(2, 25))
        p = np.sort(rng.uniform(0, 1, m - 1))
        c = float(rng.choice([0.0, 4.0]))

        def gain_of(tup):
            g, prev = 0.0, 0.0
            for j in tup:
                g += (m - j) * (p[j - 1] - prev) - c * (1.0 - prev)
                prev = p[j - 1]
            return g

        best, best_gain = (), 0.0
        for size in (1, 2):
            for tup in itertools.combinations(range(1, m), size):
                g = gain_of(tup)
                if g > best_gain:
                    best, best_gain = tup, g
        positions, gain = select_checks(p, m, 2, c)
        assert positions == best, f"trial {trial}: {positions} != {best}"
        assert gain == pytest.approx(best_gain)
    print("PASS selection optimality: 200 random CDFs match exhaustive search")


def test_fused_spatial_max_matches_baseline():
    model, plan = _planned("gmp-like")
    inputs = gen_inputs(model, 100, seed=17)
    for hsc in (True, False):
        cmp = compare_modes(model, plan, inputs, high_short_circuit=hsc)
        label = "short-circuit" if hsc else "no-short-circuit"
        assert cmp.all_equal, f"{label}: divergence"
    print("PASS fused max: gmp-like 100/100 equal in both high-exit modes")


def test_mac_accounting_and_plan_overhead():
    lines = []
    for preset in PRESETS:
        model, plan = _planned(preset)
        cmp = compare_modes(model, plan, gen_inputs(model, 10, seed=23))
        t = cmp.totals
        assert t.macs_executed + t.macs_omitted == t.macs_total
        for c in cmp.layer_counters.values():
            assert c.macs_executed + c.macs_omitted == c.macs_total
        pb, mb, ratio = plan_overhead(plan, model)
        assert pb > 0 and mb > 0
        lines.append(f"{preset} {100 * ratio:.0f}%")
    print(f"PASS accounting: executed+omitted=total everywhere; "
          f"plan/model size {'; '.join(lines)}")


def _find_deep_neuron(model, inputs, threshold):
    for x_raw in inputs:
        cur = x_raw
        for li, layer in enumerate(model.layers):
            if layer.kind in ("conv2d", "dwconv2d", "fully_connected"):
                patches = layer_patches(cur, layer)  # centered, so zx=0 below
                for ch in range(layer.out_channels):
                    for pos in range(patches.shape[0]):
                        k = effectless_suffix(layer.weights[ch], patches[pos],
                                              int(layer.bias[ch]), 0,
                                              layer.requant[ch])
                        if k >= threshold * layer.m:
                            return li, ch, k, layer.m
            cur = layer_ref(cur, layer)
    return None


def test_deeply_effectless_neurons_exist():
    model = gen_synthetic("sat-heavy", seed=0)
    found = _find_deep_neuron(model, gen_inputs(model, 4, seed=31), 0.5)
    assert found is not None, "no neuron loses at least half its kernel to saturation"
    li, ch, k, m = found
    print(f"PASS deep saturation: layer {li} channel {ch} needs only {m - k}/{m} "
          f"MACs for its final value ({100 * k / m:.0f}% effectless)")
