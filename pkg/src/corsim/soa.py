"""Self-organizing secondary extension layered on the actuated engine.

At the instant an arterial through phase gaps out, the algorithm evaluates
whether holding the green a few more seconds would serve an approaching
platoon cheaply enough: it searches candidate extension lengths for the one
minimizing wasted green per served vehicle, compares that against an
affordability threshold that tightens as intersection utilization rises, and
caps the extension by the cycle-length disagreement with neighboring
intersections.  A granted extension is implemented as a hold, at most once
per cycle per arterial phase.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .core import ARTERIAL_THROUGH_PHASES, BARRIER_GROUP_A, BARRIER_GROUP_B
from .sensing import ArrivalTable, cumulative_arrivals

INFINITE_LOST_TIME = math.inf


@dataclass(frozen=True)
class SoaParams:
    h_sat: float = 2.0                      # s/veh saturation headway
    sx_cap: float = 30.0                    # s, absolute extension ceiling
    sx_floor: float = 10.0                  # s, extension floor
    lost_time_per_critical_phase: float = 4.0
    xc_window: int = 5                      # cycles between estimator updates
    xc_prior: float = 0.75                  # used until data accumulates
    once_per_cycle: bool = True

    def __post_init__(self):
        if self.sx_floor > self.sx_cap:
            raise ValueError("sx_floor must be <= sx_cap")
        if self.h_sat <= 0:
            raise ValueError("h_sat must be > 0")


@dataclass
class SoaState:
    """Per-intersection adaptive state."""

    xc: float
    delta_c: tuple[float, float] = (0.0, 0.0)   # |cycle - neighbor_j cycle|
    used_this_cycle: dict[int, bool] = field(
        default_factory=lambda: {p: False for p in ARTERIAL_THROUGH_PHASES}
    )
    evaluated_this_green: dict[int, bool] = field(
        default_factory=lambda: {p: False for p in ARTERIAL_THROUGH_PHASES}
    )

    def reset_cycle(self, phase: int) -> None:
        self.used_this_cycle[phase] = False
        self.evaluated_this_green[phase] = False


def lost_time_per_vehicle(t: float, n: int, h_sat: float) -> float:
    """Wasted green per vehicle for an extension of t seconds serving n
    vehicles; clamped at zero, infinite when nobody is served."""
    if t <= 0:
        raise ValueError("t must be > 0")
    if n <= 0:
        return INFINITE_LOST_TIME
    return max(0.0, (t - n * h_sat) / n)


def capacity_capped_arrivals(table: ArrivalTable, phase: int, t: int, h_sat: float) -> int:
    """Vehicles that could actually cross during an extension of t seconds:
    projected arrivals capped at the stop line's discharge capacity."""
    return min(cumulative_arrivals(table, phase, t), int(t // h_sat))


def optimal_secondary_extension(
    table: ArrivalTable,
    phase: int,
    sx_max: float,
    h_sat: float,
) -> tuple[int, float]:
    """Search integer extension lengths 1..sx_max for the minimum lost time
    per vehicle; ties break toward the shorter extension.

    Returns (t_star, l_v_star); (0, inf) when nothing is observable.
    """
    if sx_max < 1:
        raise ValueError("sx_max must be >= 1")
    best_t, best_lv = 0, INFINITE_LOST_TIME
    limit = min(int(sx_max), table.horizon)
    for t in range(1, limit + 1):
        n = capacity_capped_arrivals(table, phase, t, h_sat)
        lv = lost_time_per_vehicle(t, n, h_sat)
        if lv < best_lv:
            best_t, best_lv = t, lv
    return best_t, best_lv


def affordable_lost_time(xc: float) -> float:
    """Extension affordability threshold: 2 s at or below half utilization,
    shrinking to zero as utilization reaches saturation."""
    if xc <= 0:
        return 2.0
    return min(2.0, max(0.0, 2.0 * (1.0 / xc - 1.0)))


def max_secondary_extension(dc1: float, dc2: float, floor: float = 10.0, cap: float = 30.0) -> float:
    """Allowable extension from neighbor cycle-length differences."""
    return min(max(floor, dc1, dc2), cap)


def estimate_xc(
    flow_ratios: dict[int, float],
    measured_cycle: float | None,
    lost_time: float = 16.0,
    prior: float = 0.75,
) -> float:
    """Critical degree of utilization from per-phase flow ratios and the
    measured effective cycle length.

    The critical sum takes the max over ring paths inside each barrier
    group.  Returns the configured prior when no cycle measurement exists.
    """
    if measured_cycle is None:
        return prior
    if measured_cycle <= lost_time:
        return prior
    y = flow_ratios
    crit_a = max(y.get(1, 0.0) + y.get(2, 0.0), y.get(5, 0.0) + y.get(6, 0.0))
    crit_b = max(y.get(3, 0.0) + y.get(4, 0.0), y.get(7, 0.0) + y.get(8, 0.0))
    total = crit_a + crit_b
    return total * measured_cycle / (measured_cycle - lost_time)


@dataclass(frozen=True)
class ExtensionDecision:
    """One secondary-extension evaluation, granted or not (log row)."""

    time: float
    intersection: int
    phase: int
    xc: float
    affordable: float
    sx_max: float
    t_star: int
    l_v_star: float
    granted: bool


def decide_secondary_extension(
    state: SoaState,
    params: SoaParams,
    table: ArrivalTable,
    phase: int,
) -> tuple[float, int, float, float, float]:
    """Hold duration in seconds (0 = none) for an arterial phase at its
    gap-out boundary, plus the evaluation internals for logging:
    (hold, t_star, l_v_star, sx_max, affordable)."""
    if phase not in ARTERIAL_THROUGH_PHASES:
        raise ValueError(f"secondary extension applies to phases {ARTERIAL_THROUGH_PHASES}")
    sx_max = max_secondary_extension(
        state.delta_c[0], state.delta_c[1], params.sx_floor, params.sx_cap
    )
    t_star, l_v_star = optimal_secondary_extension(table, phase, sx_max, params.h_sat)
    la = affordable_lost_time(state.xc)
    grant = (
        t_star > 0
        and l_v_star <= la
        and not (params.once_per_cycle and state.used_this_cycle[phase])
    )
    if grant:
        state.used_this_cycle[phase] = True
        return float(t_star), t_star, l_v_star, sx_max, la
    return 0.0, t_star, l_v_star, sx_max, la


class FlowRatioTracker:
    """Counts stop-bar crossings per phase to produce flow ratios over the
    estimator window (volume / saturation flow, per lane)."""

    def __init__(self, lanes_per_phase: dict[int, int], h_sat: float):
        self.lanes = lanes_per_phase
        self.h_sat = h_sat
        self.counts = {p: 0 for p in lanes_per_phase}
        self.window_start: float = 0.0

    def record_crossing(self, phase: int) -> None:
        if phase in self.counts:
            self.counts[phase] += 1

    def ratios_and_reset(self, now: float) -> dict[int, float]:
        elapsed = now - self.window_start
        out = {}
        for p, c in self.counts.items():
            sat_rate = self.lanes[p] / self.h_sat  # veh/s at saturation
            out[p] = (c / elapsed) / sat_rate if elapsed > 0 else 0.0
            self.counts[p] = 0
        self.window_start = now
        return out
