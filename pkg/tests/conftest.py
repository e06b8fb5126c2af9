"""Shared fixtures: generated models and plans reused across test modules."""

import numpy as np
import pytest

from satconv import gen_inputs, gen_synthetic, profile_model, build_plan
from satconv.quant import RequantParams
from satconv.sat_plan import PlanConfig


def identity_requant(zo: int = 0, q_lo: int = -128, q_hi: int = 127) -> RequantParams:
    """Ratio-1.0 requantization: output equals clamp(acc + zo)."""
    return RequantParams.from_ratio(1.0, zo=zo, q_lo=q_lo, q_hi=q_hi)


def make_planned(preset: str):
    model = gen_synthetic(preset, seed=0)
    profiles = profile_model(model, gen_inputs(model, 16, seed=101))
    plan = build_plan(model, profiles, PlanConfig())
    return model, profiles, plan


@pytest.fixture(scope="session")
def tiny_model():
    return gen_synthetic("tiny", seed=0)


@pytest.fixture(scope="session")
def sat_heavy():
    """(model, profiles, plan) for the saturation-heavy preset."""
    return make_planned("sat-heavy")


@pytest.fixture(scope="session")
def gmp():
    """(model, profiles, plan) for the preset ending in a global max."""
    return make_planned("gmp-like")


@pytest.fixture
def rng():
    return np.random.default_rng(0xC0FFEE)
