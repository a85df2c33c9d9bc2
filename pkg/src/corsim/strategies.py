"""Control strategy supervisors: per-tick command producers over the
actuated engine.

FA issues nothing (pure actuation).  CA holds the coordinated phases to a
background cycle with fixed force-offs.  SOA watches for arterial gap-out
boundaries and converts granted secondary extensions into holds.  PAA
replans at barrier-group boundaries and drives the controller with timed
calls, holds and force-offs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .controller import ControllerCommand, GREEN, EMPTY_COMMAND
from .core import (
    ARTERIAL_THROUGH_PHASES,
    PHASE_LANES,
    SimulationDefaults,
    other_group,
)
from .paa import (
    DpProblem,
    PhaseTiming,
    PriorityWindow,
    apply_priority_requests,
    backward_retrieve,
    forward_recursion,
)
from .sensing import build_arrival_table
from .soa import (
    FlowRatioTracker,
    SoaParams,
    SoaState,
    decide_secondary_extension,
    estimate_xc,
    max_secondary_extension,
)


class Supervisor:
    """Base: no commands, no bookkeeping."""

    def begin(self, sim) -> None:
        pass

    def commands(self, sim, intersection: int) -> ControllerCommand | None:
        return None

    def on_crossing(self, sim, intersection: int, phase: int) -> None:
        pass

    def finish(self, sim) -> None:
        pass


class FullyActuated(Supervisor):
    pass


class CoordinatedActuated(Supervisor):
    """Fixed cycle/offset/split plan executed as holds plus force-offs.

    Cycle time zero is the start of the arterial barrier group; coordinated
    phases (2, 6) are held non-actuated until their force-off and carry a
    standing recall."""

    def __init__(self, plan):
        self.plan = plan
        self._force: list[dict[int, float]] = []

    def begin(self, sim) -> None:
        self._force = [self.plan.force_off_points(i) for i in range(sim.n_int)]

    def commands(self, sim, intersection: int) -> ControllerCommand:
        t = sim.tick * sim.dt
        cycle = self.plan.cycle
        cyc = (t - self.plan.offsets[intersection]) % cycle
        ctrl = sim.controllers[intersection]
        holds, forces = set(), set()
        for p, f in self._force[intersection].items():
            if ctrl.phase_interval(p) != GREEN:
                continue
            # force-off is a level: a green that was already running when the
            # phase's force point last passed must end; a green that started
            # afterwards (early return) runs to the next force point
            since_force = (cyc - f) % cycle
            if ctrl.green_seconds(p) > since_force:
                forces.add(p)
            elif p in ARTERIAL_THROUGH_PHASES:
                holds.add(p)
        return ControllerCommand(
            holds=frozenset(holds),
            calls=frozenset(ARTERIAL_THROUGH_PHASES),
            force_offs=frozenset(forces),
        )


@dataclass
class _Hold:
    phase: int
    until_tick: int
    granted_at: int


class SelfOrganizing(Supervisor):
    """Secondary-extension layer: at most one hold per arterial phase per
    cycle, sized by the arrival table and capped by neighbor cycle
    disagreement."""

    def __init__(self, params: SoaParams, sensing_range: float):
        self.params = params
        self.range = sensing_range
        self.states: list[SoaState] = []
        self.trackers: list[FlowRatioTracker] = []
        self.holds: list[_Hold | None] = []
        self._cycles_seen: list[int] = []

    def begin(self, sim) -> None:
        n = sim.n_int
        self.states = [SoaState(xc=self.params.xc_prior) for _ in range(n)]
        self.trackers = [
            FlowRatioTracker(dict(PHASE_LANES), self.params.h_sat) for _ in range(n)
        ]
        self.holds = [None] * n
        self._cycles_seen = [0] * n

    def on_crossing(self, sim, intersection: int, phase: int) -> None:
        self.trackers[intersection].record_crossing(phase)

    def commands(self, sim, intersection: int) -> ControllerCommand | None:
        ctrl = sim.controllers[intersection]
        state = self.states[intersection]
        self._track_cycles(sim, intersection)

        hold = self.holds[intersection]
        if hold is not None:
            if ctrl.phase_interval(hold.phase) != GREEN:
                self.holds[intersection] = None
            elif sim.tick >= hold.until_tick:
                self.holds[intersection] = None
            elif (sim.tick - hold.granted_at) % (sim.per_s // 2) == 0:
                remaining = (hold.until_tick - sim.tick) * sim.dt
                if not self._platoon_pending(sim, intersection, hold.phase, remaining):
                    self.holds[intersection] = None
            hold = self.holds[intersection]
            if hold is not None:
                return ControllerCommand(holds=frozenset({hold.phase}))

        for phase in ARTERIAL_THROUGH_PHASES:
            if state.evaluated_this_green[phase]:
                continue
            if not ctrl.gapout_imminent(phase):
                continue
            state.evaluated_this_green[phase] = True
            # vehicles already inside the yellow-commitment envelope clear
            # the intersection with or without an extension; only vehicles
            # an extension can actually save justify one
            b2 = 2.0 * sim.cfg.defaults.comfortable_decel
            table = build_arrival_table(
                [
                    s
                    for s in sim.sense(intersection, self.range)
                    if s.phase == phase
                    and (s.queued or s.distance_to_stopbar > s.speed * s.speed / b2)
                ],
                horizon=int(self.params.sx_cap) + 1,
            )
            hold_s, t_star, l_v_star, sx_max, la = decide_secondary_extension(
                state, self.params, table, phase
            )
            sim.record.soa_events.append(
                (
                    sim.tick * sim.dt,
                    intersection,
                    phase,
                    round(state.xc, 4),
                    round(la, 4),
                    sx_max,
                    t_star,
                    (round(l_v_star, 4) if math.isfinite(l_v_star) else "inf"),
                    int(hold_s > 0),
                )
            )
            if hold_s > 0:
                self.holds[intersection] = _Hold(
                    phase=phase,
                    until_tick=sim.tick + int(round(hold_s * sim.per_s)),
                    granted_at=sim.tick,
                )
                return ControllerCommand(holds=frozenset({phase}))
        return None

    def _platoon_pending(self, sim, intersection: int, phase: int, remaining: float) -> bool:
        """Keep the hold only while the expected platoon is still beyond the
        advance detector; once inside, the primary extension carries it."""
        adv = sim.cfg.geometry.advance_detector_offset
        for s in sim.sense(intersection, self.range):
            if s.phase != phase or s.queued:
                continue
            if s.distance_to_stopbar <= adv:
                continue
            if s.distance_to_stopbar / max(s.speed, 5.0) <= remaining:
                return True
        return False

    def _track_cycles(self, sim, intersection: int) -> None:
        ctrl = sim.controllers[intersection]
        st = self.states[intersection]
        for p in ARTERIAL_THROUGH_PHASES:
            if ctrl.phase_interval(p) == GREEN and ctrl.green_elapsed[p] == 0:
                st.reset_cycle(p)
        cycles = ctrl.cycle_counter
        seen = self._cycles_seen[intersection]
        if cycles > seen and cycles % self.params.xc_window == 0:
            self._cycles_seen[intersection] = cycles
            now = sim.tick * sim.dt
            ratios = self.trackers[intersection].ratios_and_reset(now)
            cycle = ctrl.effective_cycle(2, self.params.xc_window)
            lost = 4 * self.params.lost_time_per_critical_phase
            st.xc = estimate_xc(ratios, cycle, lost, prior=self.params.xc_prior)
            own = ctrl.effective_cycle(2, self.params.xc_window)
            dcs = []
            for j in (intersection - 1, intersection + 1):
                if 0 <= j < sim.n_int and own is not None:
                    nb = sim.controllers[j].effective_cycle(2, self.params.xc_window)
                    dcs.append(abs(own - nb) if nb is not None else 0.0)
                else:
                    dcs.append(0.0)
            st.delta_c = (dcs[0], dcs[1])


@dataclass
class _PaaPlanState:
    t0_tick: int
    greens: list  # (phase, start_tick, end_tick) absolute
    next_replan: int
    start_group: str


class PhaseAllocation(Supervisor):
    """Drive-mode planner: replans at every barrier-group boundary and
    follows the plan with timed calls, holds and force-offs."""

    def __init__(
        self,
        timings: dict[int, PhaseTiming],
        sensing_range: float,
        horizon: int = 120,
        stage_cap: int = 8,
        h_sat: int = 2,
        priority_provider=None,
    ):
        self.timings = timings
        self.range = sensing_range
        self.horizon = horizon
        self.stage_cap = stage_cap
        self.h_sat = h_sat
        self.priority_provider = priority_provider
        self.plans: list[_PaaPlanState | None] = []

    def begin(self, sim) -> None:
        self.plans = [None] * sim.n_int

    def replan_due(self, sim, intersection: int) -> bool:
        st = self.plans[intersection]
        return st is None or sim.tick >= st.next_replan

    def commands(self, sim, intersection: int) -> ControllerCommand:
        if self.replan_due(sim, intersection):
            self._replan(sim, intersection)
        st = self.plans[intersection]
        ctrl = sim.controllers[intersection]
        holds, calls, forces = set(), set(), set()
        lead = 6 * sim.per_s
        for phase, start, end in st.greens:
            if start - lead <= sim.tick < start:
                calls.add(phase)
            elif start <= sim.tick < end:
                if ctrl.phase_interval(phase) == GREEN:
                    holds.add(phase)
                else:
                    calls.add(phase)
            elif sim.tick >= end and ctrl.phase_interval(phase) == GREEN:
                nxt = next(
                    (s for p, s, e in st.greens if p == phase and s > sim.tick), None
                )
                if nxt is None or sim.tick < nxt - lead:
                    forces.add(phase)
        holds -= forces
        return ControllerCommand(
            holds=frozenset(holds), calls=frozenset(calls), force_offs=frozenset(forces)
        )

    def _replan(self, sim, intersection: int) -> None:
        prev = self.plans[intersection]
        start_group = prev.start_group if prev else "A"
        now_s = sim.tick * sim.dt
        sensed = sim.sense(intersection, self.range)
        table = build_arrival_table(sensed, horizon=self.horizon)
        problem = DpProblem.from_arrival_table(
            table,
            self.timings,
            horizon=self.horizon,
            start_group=start_group,
            h_sat=self.h_sat,
            stage_cap=self.stage_cap,
        )
        if self.priority_provider is not None:
            windows = self.priority_provider(intersection, now_s, self.horizon)
            if windows:
                try:
                    problem = apply_priority_requests(problem, windows)
                except Exception:
                    pass
        try:
            plan = backward_retrieve(forward_recursion(problem))
        except Exception:
            # infeasible under priority windows: fall back to unconstrained
            problem = DpProblem.from_arrival_table(
                table, self.timings, self.horizon, start_group, self.h_sat, self.stage_cap
            )
            plan = backward_retrieve(forward_recursion(problem))
        t0 = sim.tick
        greens = [
            (g.phase, t0 + g.start * sim.per_s, t0 + g.end * sim.per_s)
            for g in plan.greens
        ]
        stage1 = plan.stages[0]
        self.plans[intersection] = _PaaPlanState(
            t0_tick=t0,
            greens=greens,
            next_replan=t0 + stage1.length * sim.per_s,
            start_group=other_group(stage1.group),
        )
        sim.record.paa_events.append(
            (
                now_s,
                intersection,
                "|".join(str(s.length) for s in plan.stages),
                "|".join(
                    "-".join(str(p) for r in s.rings for p in r.order)
                    for s in plan.stages
                ),
                "|".join(
                    "-".join(str(r.split) for r in s.rings) for s in plan.stages
                ),
                plan.total_delay,
            )
        )


def replan_trigger(supervisor: PhaseAllocation, sim, intersection: int) -> bool:
    """True exactly at barrier-group boundaries (the all-red instant before
    the next group's first phases start)."""
    return supervisor.replan_due(sim, intersection)


def make_supervisor(
    strategy: str,
    sensing_range: float,
    defaults: SimulationDefaults,
    phase_configs,
    soa_params: SoaParams | None = None,
    ca_plan=None,
    paa_horizon: int = 120,
    paa_stage_cap: int = 8,
    priority_provider=None,
) -> Supervisor:
    if strategy == "FA":
        return FullyActuated()
    if strategy == "CA":
        if ca_plan is None:
            raise ValueError("CA strategy requires a timing plan")
        return CoordinatedActuated(ca_plan)
    if strategy == "SOA":
        return SelfOrganizing(soa_params or SoaParams(), sensing_range)
    if strategy == "PAA":
        timings = {p: PhaseTiming.from_config(c) for p, c in phase_configs.items()}
        return PhaseAllocation(
            timings,
            sensing_range,
            horizon=paa_horizon,
            stage_cap=paa_stage_cap,
            h_sat=int(round(defaults.saturation_headway)),
            priority_provider=priority_provider,
        )
    raise ValueError(f"unknown strategy {strategy!r}")
