"""Saturation-aware quantized (int8) CNN inference toolkit.

Exploits output saturation: when a partially accumulated neuron plus the
worst-case remaining contribution already commits the requantized result to a
clamp rail, the remaining multiply-accumulates are skipped with bit-exact
outputs. Includes reference kernels, offline analysis/profiling/planning, the
saturation-aware executor with fused global-max support, and a CLI.
"""

__version__ = "0.1.0"

from .errors import (FormatError, InvalidRatioError, InvariantViolation,
                     PlanMismatchError, SatconvError, ValidationError)
from .io import (load_array, load_model, load_tensor, save_array, save_model,
                 save_tensor)
from .model import LayerSpec, Model
from .quant import (INT8_MAX, INT8_MIN, QuantTensor, RequantParams,
                    derive_multiplier, requantize, requantize_array)
from .ref_kernels import argmax, conv_like_ref, dot_ref, im2col, layer_ref, run_reference
from .rng import SplitMix64
from .sat_exec import (ExecCounters, ExecReport, SatDotResult, TraceRow,
                       compare_modes, conv2d_sat, conv_reduce_max_fused,
                       run_inference, sat_dot, trace_neuron)
from .sat_plan import (AccBounds, AnalyzeReport, ChannelPlan, CheckPoint,
                       DeviationTable, KernelPlan, LayerPlan, PlanConfig,
                       ProfileCdf, acc_boundaries, analyze_stats, build_plan,
                       build_redirection, deviation_tables, earliest_trigger,
                       effectless_suffix, load_plan, load_profiles,
                       plan_overhead, profile_layer, profile_model, save_plan,
                       save_profiles, select_checks, x_range)
from .synthetic import PRESETS, gen_inputs, gen_synthetic

__all__ = [
    "AccBounds", "AnalyzeReport", "ChannelPlan", "CheckPoint", "DeviationTable",
    "ExecCounters", "ExecReport", "FormatError", "INT8_MAX", "INT8_MIN",
    "InvalidRatioError", "InvariantViolation", "KernelPlan", "LayerPlan",
    "LayerSpec", "Model", "PlanConfig", "PlanMismatchError", "PRESETS",
    "ProfileCdf", "QuantTensor", "RequantParams", "SatconvError", "SatDotResult",
    "SplitMix64", "TraceRow", "ValidationError", "acc_boundaries",
    "analyze_stats", "argmax", "build_plan", "build_redirection", "compare_modes",
    "conv2d_sat", "conv_like_ref", "conv_reduce_max_fused", "derive_multiplier",
    "deviation_tables", "dot_ref", "earliest_trigger", "effectless_suffix",
    "gen_inputs", "gen_synthetic", "im2col", "layer_ref", "load_array", "load_model",
    "load_plan", "load_profiles", "load_tensor", "plan_overhead",
    "profile_layer", "profile_model", "requantize", "requantize_array",
    "run_inference", "run_reference", "sat_dot", "save_array", "save_model",
    "save_plan", "save_profiles", "save_tensor", "select_checks", "trace_neuron",
    "x_range",
]
