"""Baseline timing-plan generation and demand calibration.

The coordinated-actuated baseline is a common cycle with per-intersection
offsets and splits: Webster's formula seeds the cycle and proportional
splits, offsets start as link travel-time differences, and a coordinate
hill climb over (cycle, offsets, split transfers) refines the plan against
a simulated performance index (delay hours plus weighted stops).

Demand calibration scales scenario entry volumes until the critical degree
of utilization of every intersection sits at its target.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

from .core import (
    ALL_PHASES,
    Approach,
    Movement,
    PHASE_LANES,
    RING_1,
    RING_2,
    ScenarioConfig,
    Turn,
)
from .network import Network, propagate_volumes

RING_SEQUENCES = (RING_1, RING_2)
SATURATION_PER_LANE = 1800.0  # veh/h/lane at 2.0 s headway


@dataclass
class TimingPlan:
    """Common-cycle coordinated plan; splits include clearance."""

    cycle: int
    offsets: list[int]
    splits: list[dict[int, int]]      # per intersection: phase -> seconds
    clearance: float = 5.0
    min_green: float = 5.0
    coordinated: tuple[int, int] = (2, 6)

    def validate(self) -> list[str]:
        errors = []
        if not 60 <= self.cycle <= 120:
            errors.append(f"cycle {self.cycle} outside [60, 120]")
        floor = self.min_green + self.clearance
        for i, sp in enumerate(self.splits):
            for ring in RING_SEQUENCES:
                total = sum(sp[p] for p in ring)
                if total != self.cycle:
                    errors.append(
                        f"i{i} ring {ring} splits sum to {total}, cycle is {self.cycle}"
                    )
            for p, u in sp.items():
                if u < floor:
                    errors.append(f"i{i} phase {p} split {u} below {floor}")
        return errors

    def force_off_points(self, intersection: int) -> dict[int, float]:
        """Green-end instant of each phase in local cycle time (cycle zero =
        arterial group start)."""
        sp = self.splits[intersection]
        out = {}
        for ring in RING_SEQUENCES:
            acc = 0.0
            for p in ring:
                acc += sp[p]
                out[p] = acc - self.clearance
        return out

    def green_window(self, intersection: int, phase: int) -> tuple[float, float]:
        """Nominal [start, end) of the phase's green in local cycle time."""
        sp = self.splits[intersection]
        for ring in RING_SEQUENCES:
            if phase in ring:
                acc = 0.0
                for p in ring:
                    if p == phase:
                        return acc, acc + sp[p] - self.clearance
                    acc += sp[p]
        raise ValueError(f"phase {phase} not in plan")

    def copy(self) -> "TimingPlan":
        return TimingPlan(
            cycle=self.cycle,
            offsets=list(self.offsets),
            splits=[dict(s) for s in self.splits],
            clearance=self.clearance,
            min_green=self.min_green,
            coordinated=self.coordinated,
        )

    def to_dict(self) -> dict:
        return {
            "cycle": self.cycle,
            "offsets": list(self.offsets),
            "splits": [{str(p): int(u) for p, u in sp.items()} for sp in self.splits],
            "clearance": self.clearance,
            "min_green": self.min_green,
        }

    @staticmethod
    def from_dict(d: dict) -> "TimingPlan":
        return TimingPlan(
            cycle=int(d["cycle"]),
            offsets=[int(x) for x in d["offsets"]],
            splits=[{int(p): int(u) for p, u in sp.items()} for sp in d["splits"]],
            clearance=float(d.get("clearance", 5.0)),
            min_green=float(d.get("min_green", 5.0)),
        )


def phase_flow_ratios(net: Network, scenario: ScenarioConfig) -> list[dict[int, float]]:
    """Per-intersection per-phase volume/saturation ratios from propagated
    demand; rights share the through lanes."""
    vols = propagate_volumes(net, scenario)
    out = []
    for i in range(net.geometry.n_intersections):
        ratios = {p: 0.0 for p in ALL_PHASES}
        for (mv, vol) in vols.items():
            if mv.intersection != i:
                continue
            p = mv.phase
            ratios[p] += vol
        for p in ALL_PHASES:
            ratios[p] /= PHASE_LANES[p] * SATURATION_PER_LANE
        out.append(ratios)
    return out


def critical_sum(ratios: dict[int, float]) -> float:
    a = max(ratios[1] + ratios[2], ratios[5] + ratios[6])
    b = max(ratios[3] + ratios[4], ratios[7] + ratios[8])
    return a + b


def webster_cycle(y_critical: float, lost_time: float, lo: int = 60, hi: int = 120) -> int:
    """(1.5 L + 5) / (1 - Y), clamped; oversaturated demand pins the max."""
    if y_critical >= 0.95:
        return hi
    c = (1.5 * lost_time + 5.0) / (1.0 - y_critical)
    return int(round(min(max(c, lo), hi)))


def webster_initial(
    flow_ratios: list[dict[int, float]],
    lost_time: float,
    travel_times: list[float],
    clearance: float = 5.0,
    min_green: float = 5.0,
    startup: float = 2.0,
) -> TimingPlan:
    """Webster cycle, splits proportional to flow ratios in effective-green
    terms (each served phase pays startup plus clearance), offsets from link
    travel times."""
    y_crit = max(critical_sum(r) for r in flow_ratios)
    cycle = webster_cycle(y_crit, lost_time)
    splits = []
    floor = int(round(min_green + clearance))
    overhead = clearance + startup  # per served phase on the critical path
    for ratios in flow_ratios:
        crit_a = max(ratios[1] + ratios[2], ratios[5] + ratios[6])
        crit_b = max(ratios[3] + ratios[4], ratios[7] + ratios[8])
        total_crit = max(crit_a + crit_b, 1e-9)
        eff_budget = cycle - 4 * overhead
        t_a = 2 * overhead + eff_budget * crit_a / total_crit
        sp: dict[int, int] = {}
        for group_phases in ((1, 2), (5, 6)):
            sp.update(_ring_pair_split(ratios, group_phases, t_a, overhead, floor))
        t_b = cycle - t_a
        for group_phases in ((3, 4), (7, 8)):
            sp.update(_ring_pair_split(ratios, group_phases, t_b, overhead, floor))
        sp = _repair_splits(sp, cycle, floor)
        splits.append(sp)
    offsets = [int(round(tt)) % cycle for tt in travel_times]
    plan = TimingPlan(
        cycle=cycle, offsets=offsets, splits=splits,
        clearance=clearance, min_green=min_green,
    )
    errs = plan.validate()
    if errs:
        raise ValueError("webster seed invalid: " + "; ".join(errs))
    return plan


def _ring_pair_split(ratios, pair, group_time, overhead, floor) -> dict[int, int]:
    pl, pt = pair
    yl, yt = ratios[pl], ratios[pt]
    eff = group_time - 2 * overhead
    if yl + yt <= 1e-9:
        gl = eff / 2
    else:
        gl = eff * yl / (yl + yt)
    ul = max(floor, int(round(gl + overhead)))
    ut = int(round(group_time)) - ul
    if ut < floor:
        ut = floor
        ul = int(round(group_time)) - ut
    return {pl: ul, pt: ut}


def _repair_splits(sp: dict[int, int], cycle: int, floor: int) -> dict[int, int]:
    """Force each ring's splits to sum exactly to the cycle, keeping the
    floor; adjustment lands on the largest split."""
    out = dict(sp)
    for ring in RING_SEQUENCES:
        diff = cycle - sum(out[p] for p in ring)
        if diff != 0:
            target = max(ring, key=lambda p: (out[p], -p))
            out[target] += diff
            if out[target] < floor:
                raise ValueError("cannot repair splits within floors")
    return out


def performance_index(delay_hours: float, stops: float, k: float = 0.2) -> float:
    """Delay hours plus k per hundred stops."""
    if delay_hours < 0 or stops < 0:
        raise ValueError("inputs must be >= 0")
    return delay_hours + k * (stops / 100.0)


def hill_climb(
    initial: TimingPlan,
    evaluator,
    budget: int,
    cycle_step: int = 5,
    offset_step: int = 2,
    split_step: int = 2,
) -> TimingPlan:
    """Coordinate-wise strict-improvement search over cycle, offsets and
    zero-sum split transfers; deterministic move order, fixed seeds live in
    the evaluator.  Returns a plan whose PI never exceeds the initial's."""
    if budget < 1:
        return initial
    best = initial.copy()
    best_pi = evaluator(best)
    evals = 1
    floor = int(round(initial.min_green + initial.clearance))
    improved = True
    while improved and evals < budget:
        improved = False
        for cand in _neighbors(best, cycle_step, offset_step, split_step, floor):
            if evals >= budget:
                break
            pi = evaluator(cand)
            evals += 1
            if pi < best_pi:
                best, best_pi = cand, pi
                improved = True
    return best


def _neighbors(plan: TimingPlan, cycle_step, offset_step, split_step, floor):
    for dc in (cycle_step, -cycle_step):
        cand = _rescale_cycle(plan, plan.cycle + dc, floor)
        if cand is not None:
            yield cand
    for i in range(len(plan.offsets)):
        for do in (offset_step, -offset_step):
            cand = plan.copy()
            cand.offsets[i] = (cand.offsets[i] + do) % cand.cycle
            yield cand
    pairs = ((1, 2), (5, 6), (3, 4), (7, 8))
    for i in range(len(plan.splits)):
        for a, b in pairs:
            for d in (split_step, -split_step):
                cand = plan.copy()
                cand.splits[i][a] += d
                cand.splits[i][b] -= d
                if cand.splits[i][a] < floor or cand.splits[i][b] < floor:
                    continue
                yield cand


def _rescale_cycle(plan: TimingPlan, new_cycle: int, floor: int) -> TimingPlan | None:
    if not 60 <= new_cycle <= 120:
        return None
    cand = plan.copy()
    cand.cycle = new_cycle
    scale = new_cycle / plan.cycle
    for i, sp in enumerate(cand.splits):
        scaled = {p: max(floor, int(round(u * scale))) for p, u in sp.items()}
        try:
            cand.splits[i] = _repair_splits(scaled, new_cycle, floor)
        except ValueError:
            return None
    cand.offsets = [o % new_cycle for o in cand.offsets]
    if cand.validate():
        return None
    return cand


# ---------------------------------------------------------------------------
# demand calibration
# ---------------------------------------------------------------------------

def calibrate_scenario(
    net: Network,
    template: ScenarioConfig,
    target_y: float,
    rounds: int = 6,
) -> ScenarioConfig:
    """Scale entry demands so every intersection's critical flow-ratio sum
    hits ``target_y``: one global factor, then per-intersection cross-street
    trims (flow propagation is linear in each leg's rate)."""
    scenario = template
    for _ in range(rounds):
        ratios = phase_flow_ratios(net, scenario)
        ys = [critical_sum(r) for r in ratios]
        worst = max(ys)
        if all(abs(y - target_y) < 0.005 for y in ys):
            break
        global_f = target_y / worst if worst > 0 else 1.0
        demand = {mv: rate * global_f for mv, rate in scenario.demand.items()}
        scenario = replace(scenario, demand=demand)
        ratios = phase_flow_ratios(net, scenario)
        new_demand = dict(scenario.demand)
        for i, r in enumerate(ratios):
            crit_a = max(r[1] + r[2], r[5] + r[6])
            crit_b = max(r[3] + r[4], r[7] + r[8])
            need_b = target_y - crit_a
            if crit_b > 1e-6 and need_b > 0.02:
                f = need_b / crit_b
                f = min(max(f, 0.3), 3.0)
                for mv in scenario.demand:
                    if mv.intersection == i and mv.approach in (Approach.NB, Approach.SB):
                        new_demand[mv] = scenario.demand[mv] * f
        scenario = replace(scenario, demand=new_demand)
    return scenario
