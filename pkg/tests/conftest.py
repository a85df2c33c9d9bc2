import numpy as np
import pytest

from corsim.core import (
    Approach,
    Movement,
    ScenarioConfig,
    SimulationDefaults,
    Turn,
    default_phase_configs,
)
from corsim.paa import PhaseTiming


def make_scenario(
    name="test",
    arterial=600.0,
    cross=160.0,
    warmup=120.0,
    duration=600.0,
    art_split=(0.1, 0.8, 0.1),
    cross_split=(0.2, 0.6, 0.2),
):
    demand = {}
    for turn, f in zip((Turn.LEFT, Turn.THROUGH, Turn.RIGHT), art_split):
        demand[Movement(0, Approach.EB, turn)] = arterial * f
        demand[Movement(2, Approach.WB, turn)] = arterial * f
    for i in range(3):
        for a in (Approach.NB, Approach.SB):
            for turn, f in zip((Turn.LEFT, Turn.THROUGH, Turn.RIGHT), cross_split):
                demand[Movement(i, a, turn)] = cross * f
    fractions = {}
    for i in range(3):
        for a in (Approach.EB, Approach.WB):
            fractions[(i, a)] = {Turn.LEFT: 0.08, Turn.THROUGH: 0.84, Turn.RIGHT: 0.08}
    return ScenarioConfig(
        name=name, demand=demand, turn_fractions=fractions,
        warmup=warmup, duration=duration,
    )


@pytest.fixture
def small_scenario():
    return make_scenario()


@pytest.fixture
def phase_configs():
    return default_phase_configs()


@pytest.fixture
def defaults():
    return SimulationDefaults()


@pytest.fixture
def paa_timings(phase_configs):
    return {p: PhaseTiming.from_config(c) for p, c in phase_configs.items()}


def tiny_timings(g_min=2, g_max=8, clearance=1):
    return {p: PhaseTiming(g_min, g_max, clearance) for p in range(1, 9)}
