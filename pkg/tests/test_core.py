import pytest
from hypothesis import given, strategies as st

from corsim.core import (
    ALL_PHASES,
    Approach,
    CorridorGeometry,
    Movement,
    PhaseConfig,
    ScenarioConfig,
    SensingRange,
    Turn,
    barrier_group_of,
    conflicts,
    eta_to_stopbar,
    ring_of,
)

COMPATIBLE = {
    frozenset(p)
    for p in [(1, 5), (1, 6), (2, 5), (2, 6), (3, 7), (3, 8), (4, 7), (4, 8)]
}


def test_conflicts_examples():
    assert conflicts(2, 6) is False
    assert conflicts(1, 2) is True
    assert conflicts(2, 4) is True


def test_conflicts_table_exact():
    compatible = {
        frozenset((a, b))
        for a in ALL_PHASES
        for b in ALL_PHASES
        if a != b and not conflicts(a, b)
    }
    assert compatible == COMPATIBLE


@given(st.sampled_from(ALL_PHASES), st.sampled_from(ALL_PHASES))
def test_conflicts_symmetric(a, b):
    assert conflicts(a, b) == conflicts(b, a)


def test_rings_and_groups():
    assert [ring_of(p) for p in ALL_PHASES] == [1, 1, 1, 1, 2, 2, 2, 2]
    assert {p for p in ALL_PHASES if barrier_group_of(p) == "A"} == {1, 2, 5, 6}


def test_eta_examples():
    assert eta_to_stopbar(330, 66, 5) == pytest.approx(5.0)
    assert eta_to_stopbar(0, 66, 5) == 0.0
    assert eta_to_stopbar(100, 0, 5) == pytest.approx(20.0)


@given(
    st.floats(0, 3000),
    st.floats(0, 3000),
    st.floats(0, 80),
    st.floats(0, 80),
)
def test_eta_monotone(d1, d2, v1, v2):
    lo_d, hi_d = sorted((d1, d2))
    assert eta_to_stopbar(lo_d, v1) <= eta_to_stopbar(hi_d, v1)
    lo_v, hi_v = sorted((v1, v2))
    assert eta_to_stopbar(d1, hi_v) <= eta_to_stopbar(d1, lo_v)


def test_phase_config_validation():
    with pytest.raises(ValueError):
        PhaseConfig(min_green=10, max_green=5)
    with pytest.raises(ValueError):
        PhaseConfig(yellow=0)
    cfg = PhaseConfig(yellow=4.0, all_red=1.0)
    assert cfg.clearance == 5.0


def test_movement_phases():
    assert Movement(0, Approach.EB, Turn.THROUGH).phase == 2
    assert Movement(0, Approach.EB, Turn.RIGHT).phase == 2
    assert Movement(0, Approach.WB, Turn.LEFT).phase == 1
    assert Movement(1, Approach.NB, Turn.THROUGH).phase == 4
    mv = Movement.from_key("i2.SB.left")
    assert mv == Movement(2, Approach.SB, Turn.LEFT)
    assert mv.phase == 3


def test_geometry_invariants():
    with pytest.raises(ValueError):
        CorridorGeometry(intersection_positions=(100.0, 100.0, 200.0))
    with pytest.raises(ValueError):
        CorridorGeometry(approach_length=1000.0)  # shorter than largest range
    g = CorridorGeometry()
    assert g.internal_link_length(0) == pytest.approx(1320.0)


def test_sensing_range_validation():
    with pytest.raises(ValueError):
        SensingRange(0)
    assert SensingRange(165).range_ft == 165


def test_scenario_validation():
    from conftest import make_scenario

    sc = make_scenario()
    assert not sc.validate()
    bad = dict(sc.demand)
    bad[Movement(0, Approach.EB, Turn.LEFT)] = -5.0
    with pytest.raises(ValueError):
        ScenarioConfig("x", bad, sc.turn_fractions)
