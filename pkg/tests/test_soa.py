import math

import pytest
from hypothesis import given, settings, strategies as st

from corsim.sensing import ArrivalTable
from corsim.soa import (
    SoaParams,
    SoaState,
    affordable_lost_time,
    capacity_capped_arrivals,
    decide_secondary_extension,
    estimate_xc,
    lost_time_per_vehicle,
    max_secondary_extension,
    optimal_secondary_extension,
)


def table_with(bins: dict[int, int], phase=2, horizon=31) -> ArrivalTable:
    t = ArrivalTable.empty(horizon)
    for b, n in bins.items():
        t.counts[phase][b] = n
    return t


def brute_force_extension(bins: dict[int, int], h_sat: float, sx_max: int):
    """Independent enumeration of the extension objective."""
    best = (0, math.inf)
    for t in range(1, sx_max + 1):
        n = min(sum(v for b, v in bins.items() if b <= t), int(t // h_sat))
        if n == 0:
            lv = math.inf
        else:
            lv = max(0.0, (t - n * h_sat) / n)
        if lv < best[1]:
            best = (t, lv)
    return best


def test_lost_time_examples():
    assert lost_time_per_vehicle(10, 4, 2.0) == pytest.approx(0.5)
    assert lost_time_per_vehicle(6, 3, 2.0) == 0.0
    assert lost_time_per_vehicle(5, 0, 2.0) == math.inf


@given(st.integers(1, 30), st.integers(1, 15))
def test_lost_time_identity(t, n):
    h = 2.0
    lv = lost_time_per_vehicle(t, n, h)
    if t - n * h >= 0:  # unclamped region
        assert lv * n + n * h == pytest.approx(t)


def test_optimal_extension_platoon_example():
    t, lv = optimal_secondary_extension(table_with({4: 1, 5: 1}), 2, 10, 2.0)
    assert (t, lv) == (5, pytest.approx(0.5))
    assert brute_force_extension({4: 1, 5: 1}, 2.0, 10) == (5, 0.5)


def test_optimal_extension_empty():
    t, lv = optimal_secondary_extension(ArrivalTable.empty(31), 2, 10, 2.0)
    assert (t, lv) == (0, math.inf)


def test_optimal_extension_capacity_cap_tie():
    t, lv = optimal_secondary_extension(table_with({1: 1, 2: 1, 3: 1}), 2, 10, 2.0)
    assert (t, lv) == (2, 0.0)
    assert brute_force_extension({1: 1, 2: 1, 3: 1}, 2.0, 10) == (2, 0.0)


@settings(max_examples=60)
@given(
    st.dictionaries(st.integers(0, 30), st.integers(1, 3), max_size=8),
    st.integers(10, 30),
)
def test_optimal_extension_matches_enumeration(bins, sx_max):
    got = optimal_secondary_extension(table_with(bins), 2, sx_max, 2.0)
    want = brute_force_extension(bins, 2.0, sx_max)
    assert got[0] == want[0]
    assert got[1] == pytest.approx(want[1]) or (
        math.isinf(got[1]) and math.isinf(want[1])
    )


@settings(max_examples=40)
@given(st.dictionaries(st.integers(0, 30), st.integers(1, 3), max_size=8))
def test_extension_invariant_to_arrivals_beyond_window(bins):
    sx = 10
    base = optimal_secondary_extension(table_with(bins), 2, sx, 2.0)
    noisy = dict(bins)
    noisy[25] = noisy.get(25, 0) + 5  # beyond the 10 s window
    got = optimal_secondary_extension(table_with(noisy), 2, sx, 2.0)
    assert got[0] == base[0]


def test_affordable_lost_time_examples():
    assert affordable_lost_time(0.5) == pytest.approx(2.0)
    assert affordable_lost_time(1.0) == pytest.approx(0.0)
    assert affordable_lost_time(2 / 3) == pytest.approx(1.0)


@given(st.floats(0.05, 3.0), st.floats(0.05, 3.0))
def test_affordable_monotone_nonincreasing(a, b):
    lo, hi = sorted((a, b))
    assert affordable_lost_time(hi) <= affordable_lost_time(lo) + 1e-12
    if hi <= 0.5:
        assert affordable_lost_time(hi) == 2.0


def test_max_extension_examples():
    assert max_secondary_extension(3, 5) == 10
    assert max_secondary_extension(40, 20) == 30
    assert max_secondary_extension(0, 0) == 10


@given(st.floats(0, 100), st.floats(0, 100))
def test_max_extension_bounds(d1, d2):
    assert 10 <= max_secondary_extension(d1, d2) <= 30


def test_estimate_xc_examples():
    ratios = {1: 0.0, 2: 0.35, 5: 0.0, 6: 0.25, 3: 0.0, 4: 0.25, 7: 0.0, 8: 0.1}
    # critical A = max(0.35, 0.25) = 0.35, B = max(0.25, 0.1) = 0.25 -> 0.60
    assert estimate_xc(ratios, 96.0, 16.0) == pytest.approx(0.72)
    zero = {p: 0.0 for p in range(1, 9)}
    assert estimate_xc(zero, 80.0, 16.0) == 0.0
    assert estimate_xc(zero, None, 16.0, prior=0.75) == 0.75


def test_decide_grants_and_once_per_cycle():
    params = SoaParams()
    state = SoaState(xc=0.5)
    table = table_with({4: 1, 5: 1})
    hold, t_star, lv, sx, la = decide_secondary_extension(state, params, table, 2)
    assert hold == t_star == 5 and la == pytest.approx(2.0)
    assert state.used_this_cycle[2]
    hold2, *_ = decide_secondary_extension(state, params, table, 2)
    assert hold2 == 0.0
    state.reset_cycle(2)
    hold3, *_ = decide_secondary_extension(state, params, table, 2)
    assert hold3 == 5.0


def test_decide_empty_approach():
    state = SoaState(xc=0.5)
    hold, t_star, lv, sx, la = decide_secondary_extension(
        state, SoaParams(), ArrivalTable.empty(31), 2
    )
    assert hold == 0.0 and t_star == 0 and math.isinf(lv)
    assert not state.used_this_cycle[2]


def test_decide_unaffordable():
    state = SoaState(xc=1.0)  # affordable lost time 0
    table = table_with({9: 1})  # lv(9) = (9-2)/1 = 7
    hold, *_ = decide_secondary_extension(state, SoaParams(), table, 2)
    assert hold == 0.0


def test_decide_rejects_non_arterial():
    with pytest.raises(ValueError):
        decide_secondary_extension(SoaState(xc=0.5), SoaParams(), ArrivalTable.empty(31), 4)
