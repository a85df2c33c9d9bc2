"""Phase-allocation planner: bi-level DP over barrier-group durations.

The upper level allocates integer-second stage lengths to alternating
barrier groups over a planning horizon via forward recursion and backward
retrieval; the lower level picks the lead/lag order and split inside each
stage by enumerating candidates against a per-second queue recursion
(one vehicle discharged per saturation headway of busy green).  Delay is
the sum of queue lengths over time across all eight phases: phases of the
inactive group accumulate arrivals without service.

Coordination enters as fixed priority requests: time windows during which
an arterial phase must be green.  Candidate stage layouts that leave the
phase red anywhere inside a window are discarded.

Queue state is threaded between stages greedily: each (stage, state) cell
stores the queue vector of its own best decision, and successors build on
it.  All arithmetic is integer, so results are exactly reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels
from .core import (
    ARTERIAL_THROUGH_PHASES,
    PhaseConfig,
    conflicts,
    other_group,
)
from .sensing import ArrivalTable

INF = int(_kernels.INF)

#: (group, ring) -> (left phase, through phase), phase numbers.
GROUP_RINGS = {
    "A": ((1, 2), (5, 6)),
    "B": ((3, 4), (7, 8)),
}


class InfeasibleStageError(ValueError):
    pass


class InfeasibleRequestError(ValueError):
    pass


class InfeasibleHorizonError(ValueError):
    pass


class PlanRetrievalError(RuntimeError):
    """Backtracking hit an unreachable state: the value table is corrupt."""


@dataclass(frozen=True)
class StageBounds:
    """Feasible stage-length band for one barrier group."""

    x_min: int
    x_max: int

    def __post_init__(self):
        if not (0 < self.x_min <= self.x_max):
            raise ValueError(f"need 0 < x_min <= x_max, got {self}")


@dataclass(frozen=True)
class PhaseTiming:
    """Integer-second planning parameters for one phase."""

    g_min: int
    g_max: int
    clearance: int

    @staticmethod
    def from_config(cfg: PhaseConfig) -> "PhaseTiming":
        return PhaseTiming(
            g_min=int(round(cfg.min_green)),
            g_max=int(round(cfg.max_green)),
            clearance=int(round(cfg.clearance)),
        )


def stage_bounds(group: str, timings: dict[int, PhaseTiming]) -> StageBounds:
    """Per-ring (min green + clearance) sums define the band a stage of this
    group can occupy; both rings must fill the stage exactly."""
    mins, maxes = [], []
    for left, through in GROUP_RINGS[group]:
        tl, tt = timings[left], timings[through]
        mins.append(tl.g_min + tl.clearance + tt.g_min + tt.clearance)
        maxes.append(tl.g_max + tl.clearance + tt.g_max + tt.clearance)
    return StageBounds(x_min=max(mins), x_max=min(maxes))


@dataclass(frozen=True)
class PriorityWindow:
    """The phase must be green throughout [start, end)."""

    phase: int
    start: int
    end: int


@dataclass(frozen=True)
class DpProblem:
    """One planning instance at a barrier-group boundary."""

    horizon: int
    start_group: str
    timings: dict[int, PhaseTiming]
    arrivals: np.ndarray          # int64[8, horizon], row = phase - 1
    initial_queues: np.ndarray    # int64[8]
    h_sat: int = 2
    stage_cap: int = 8
    priority_windows: tuple[PriorityWindow, ...] = ()
    #: -value/queue pairs kept per (stage, state); queue threading is exact
    #: whenever the Pareto frontier fits (small instances always do)
    frontier_cap: int = 12

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.h_sat < 1:
            raise ValueError("h_sat must be a positive integer of seconds")
        if self.arrivals.shape != (8, self.horizon):
            raise ValueError("arrivals must be shaped (8, horizon)")
        if self.horizon < self.bounds(self.start_group).x_min:
            raise ValueError("horizon shorter than the first stage's minimum")

    def bounds(self, group: str) -> StageBounds:
        return stage_bounds(group, self.timings)

    def group_of_stage(self, j: int) -> str:
        if j % 2 == 1:
            return self.start_group
        return other_group(self.start_group)

    @staticmethod
    def from_arrival_table(
        table: ArrivalTable,
        timings: dict[int, PhaseTiming],
        horizon: int,
        start_group: str,
        h_sat: int = 2,
        stage_cap: int = 8,
        frontier_cap: int = 12,
    ) -> "DpProblem":
        arr = np.zeros((8, horizon), dtype=np.int64)
        q0 = np.zeros(8, dtype=np.int64)
        for p in range(1, 9):
            bins = table.counts[p][:horizon]
            arr[p - 1, : len(bins)] = bins
            q0[p - 1] = table.initial_queue[p]
        return DpProblem(
            horizon=horizon,
            start_group=start_group,
            timings=timings,
            arrivals=arr,
            initial_queues=q0,
            h_sat=h_sat,
            stage_cap=stage_cap,
            frontier_cap=frontier_cap,
        )


def feasible_controls(s: int, bounds: StageBounds, horizon: int) -> set[int]:
    """Feasible stage lengths at state s (total seconds allocated after the
    stage); {0} marks a skipped stage when s cannot host one."""
    if not 0 <= s <= horizon:
        raise ValueError(f"state {s} outside [0, {horizon}]")
    if s < bounds.x_min:
        return {0}
    return set(range(bounds.x_min, min(bounds.x_max, s) + 1))


def apply_priority_requests(
    problem: DpProblem, windows: list[PriorityWindow]
) -> DpProblem:
    """Attach coordination windows as hard constraints; rejects windows no
    stage layout could honor."""
    for w in windows:
        if w.phase not in ARTERIAL_THROUGH_PHASES:
            raise InfeasibleRequestError(f"priority phase must be arterial, got {w.phase}")
        if not (0 <= w.start < w.end <= problem.horizon):
            raise InfeasibleRequestError(f"window {w} outside [0, {problem.horizon}]")
        t = problem.timings[w.phase]
        if w.end - w.start > t.g_max:
            raise InfeasibleRequestError(
                f"window {w} longer than the phase's max green ({t.g_max}s)"
            )
        if w.end > problem.horizon - t.clearance:
            raise InfeasibleRequestError(
                f"window {w} runs into the final clearance; clip to "
                f"{problem.horizon - t.clearance}"
            )
    return replace(problem, priority_windows=tuple(windows))


# ---------------------------------------------------------------------------
# lower level
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RingDecision:
    order: tuple[int, int]   # phases in service order
    split: int               # seconds given to the first slot incl. clearance


@dataclass(frozen=True)
class StageDecision:
    delay: int               # active-group delay, vehicle-seconds
    rings: tuple[RingDecision, RingDecision]
    queues_out: dict[int, int]


def _phase_delay(arrivals, q0: int, green: tuple[int, int], length: int, h: int):
    d, q = _kernels.phase_queue_sim(
        np.asarray(arrivals, dtype=np.int64),
        np.int64(q0),
        np.int64(green[0]),
        np.int64(green[1]),
        np.int64(length),
        np.int64(h),
    )
    return int(d), int(q)


def lower_level_delay(
    group: str,
    duration: int,
    arrivals: dict[int, np.ndarray] | np.ndarray,
    queues_in: dict[int, int],
    timings: dict[int, PhaseTiming],
    h_sat: int = 2,
    priority_cover: dict[int, tuple[int, int]] | None = None,
) -> StageDecision:
    """Best lead/lag order and split for each ring of ``group`` over a stage
    of ``duration`` seconds.

    ``arrivals`` maps phase -> per-second counts for the stage window (or an
    int64[8, duration] array).  ``priority_cover`` optionally maps a through
    phase to a [lo, hi) interval its green must contain.  Raises
    InfeasibleStageError when the duration cannot host the group or no
    candidate satisfies the priority cover.
    """
    bounds = stage_bounds(group, timings)
    if duration < bounds.x_min:
        raise InfeasibleStageError(
            f"duration {duration} below group {group} minimum {bounds.x_min}"
        )
    if duration > bounds.x_max:
        raise InfeasibleStageError(
            f"duration {duration} above group {group} maximum {bounds.x_max}"
        )

    def phase_arr(p: int) -> np.ndarray:
        if isinstance(arrivals, dict):
            a = np.asarray(arrivals.get(p, np.zeros(duration)), dtype=np.int64)
        else:
            a = np.asarray(arrivals[p - 1], dtype=np.int64)
        if a.shape[0] < duration:
            out = np.zeros(duration, dtype=np.int64)
            out[: a.shape[0]] = a
            return out
        return a[:duration]

    ring_choices: list[RingDecision] = []
    queues_out: dict[int, int] = {}
    total = 0
    for left, through in GROUP_RINGS[group]:
        tl, tt = timings[left], timings[through]
        cover = (priority_cover or {}).get(through)
        best = None  # (delay, order_idx, split, q_first, q_second, order phases)
        for order_idx, (pf, ps) in enumerate(((through, left), (left, through))):
            tf, ts = timings[pf], timings[ps]
            for d in range(tf.g_min + tf.clearance, tf.g_max + tf.clearance + 1):
                g2 = duration - d - ts.clearance
                if g2 < ts.g_min or g2 > ts.g_max:
                    continue
                first_green = (0, d - tf.clearance)
                second_green = (d, duration - ts.clearance)
                if cover is not None:
                    lo, hi = cover
                    green = first_green if pf == through else second_green
                    if not (green[0] <= lo and hi <= green[1]):
                        continue
                df, qf = _phase_delay(phase_arr(pf), queues_in.get(pf, 0), first_green, duration, h_sat)
                ds_, qs = _phase_delay(phase_arr(ps), queues_in.get(ps, 0), second_green, duration, h_sat)
                cand = (df + ds_, order_idx, d, qf, qs, (pf, ps))
                if best is None or cand[:3] < best[:3]:
                    best = cand
        if best is None:
            raise InfeasibleStageError(
                f"no feasible split for ring ({left},{through}) at duration {duration}"
            )
        delay, _, split, qf, qs, order = best
        total += delay
        ring_choices.append(RingDecision(order=order, split=split))
        queues_out[order[0]] = qf
        queues_out[order[1]] = qs
    return StageDecision(delay=total, rings=tuple(ring_choices), queues_out=queues_out)


def passive_group_delay(
    group: str,
    duration: int,
    arrivals,
    queues_in: dict[int, int],
) -> tuple[int, dict[int, int]]:
    """Delay and final queues for a group that stays red for a whole stage."""
    total = 0
    q_out = {}
    for left, through in GROUP_RINGS[group]:
        for p in (left, through):
            if isinstance(arrivals, dict):
                a = np.asarray(arrivals.get(p, np.zeros(duration)), dtype=np.int64)[:duration]
            else:
                a = np.asarray(arrivals[p - 1][:duration], dtype=np.int64)
            q = queues_in.get(p, 0)
            for n in range(duration):
                q += int(a[n]) if n < len(a) else 0
                total += q
            q_out[p] = q
    return total, q_out


# ---------------------------------------------------------------------------
# upper level
# ---------------------------------------------------------------------------

@dataclass
class ValueTable:
    """Forward-recursion output: per-state Pareto frontiers of value and
    threaded queue vectors, with the recorded stage choices."""

    problem: DpProblem
    v: np.ndarray        # int64[stage_cap+1, T+1, cap]
    n_front: np.ndarray  # int64[stage_cap+1, T+1]
    x_star: np.ndarray   # int64[stage_cap+1, T+1, cap]
    ring_order: tuple[np.ndarray, np.ndarray]
    ring_split: tuple[np.ndarray, np.ndarray]
    parent: np.ndarray   # int64[stage_cap+1, T+1, cap] predecessor entry
    queues: np.ndarray   # int64[stage_cap+1, T+1, cap, 8]
    j_last: int
    j_stop: int          # stage where the stopping rule fired, 0 if capped

    def state_value(self, j: int, s: int) -> int:
        best = INF
        for e in range(int(self.n_front[j, s])):
            best = min(best, int(self.v[j, s, e]))
        return best

    def best_entry(self) -> tuple[int, int]:
        """(stage count, frontier entry) to retrieve from: minimum value at
        the horizon; ties prefer more stages, then the longer last stage."""
        T = self.problem.horizon
        best = None
        for j in range(1, self.j_last + 1):
            for e in range(int(self.n_front[j, T])):
                val = int(self.v[j, T, e])
                key = (val, -j, -int(self.x_star[j, T, e]))
                if best is None or key < best[0]:
                    best = (key, j, e)
        if best is None or best[0][0] >= INF:
            raise InfeasibleHorizonError(
                "no feasible stage partition covers the horizon"
            )
        return best[1], best[2]

    def best_stage_count(self) -> int:
        return self.best_entry()[0]

    def plan_delay(self) -> int:
        j, e = self.best_entry()
        return int(self.v[j, self.problem.horizon, e])


def forward_recursion(problem: DpProblem) -> ValueTable:
    """Algorithm: sweep states 1..T per stage, minimizing stage delay plus
    prior value; stop when two consecutive stages agree at the horizon or
    the stage cap is hit."""
    gmin = np.zeros(8, dtype=np.int64)
    gmax = np.zeros(8, dtype=np.int64)
    rr = np.zeros(8, dtype=np.int64)
    for p in range(1, 9):
        t = problem.timings[p]
        gmin[p - 1] = t.g_min
        gmax[p - 1] = t.g_max
        rr[p - 1] = t.clearance
    xmin = np.zeros(2, dtype=np.int64)
    xmax = np.zeros(2, dtype=np.int64)
    for gi, group in enumerate("AB"):
        b = problem.bounds(group)
        xmin[gi] = b.x_min
        xmax[gi] = b.x_max
    w = problem.priority_windows
    pw_phase = np.array([win.phase - 1 for win in w], dtype=np.int64)
    pw_lo = np.array([win.start for win in w], dtype=np.int64)
    pw_hi = np.array([win.end for win in w], dtype=np.int64)
    vt, nf, xs, o1, d1, o2, d2, par, qt, j_last, j_stop = _kernels.forward_recursion_kernel(
        np.ascontiguousarray(problem.arrivals, dtype=np.int64),
        np.asarray(problem.initial_queues, dtype=np.int64),
        np.int64(problem.horizon),
        np.int64(0 if problem.start_group == "A" else 1),
        xmin,
        xmax,
        gmin,
        gmax,
        rr,
        np.int64(problem.h_sat),
        np.int64(problem.stage_cap),
        pw_phase,
        pw_lo,
        pw_hi,
        np.int64(problem.frontier_cap),
    )
    table = ValueTable(
        problem=problem,
        v=vt,
        n_front=nf,
        x_star=xs,
        ring_order=(o1, o2),
        ring_split=(d1, d2),
        parent=par,
        queues=qt,
        j_last=int(j_last),
        j_stop=int(j_stop),
    )
    if all(int(nf[j, problem.horizon]) == 0 for j in range(1, table.j_last + 1)):
        raise InfeasibleHorizonError("no feasible plan within the horizon")
    return table


@dataclass(frozen=True)
class PlannedGreen:
    phase: int
    start: int
    duration: int

    @property
    def end(self) -> int:
        return self.start + self.duration


@dataclass(frozen=True)
class PlannedStage:
    group: str
    start: int
    length: int
    rings: tuple[RingDecision, RingDecision]


@dataclass
class PhasePlan:
    """Executable timing plan: per-phase green windows over [0, span)."""

    stages: list[PlannedStage]
    greens: list[PlannedGreen]
    total_delay: int
    horizon: int

    @property
    def span(self) -> int:
        return self.stages[-1].start + self.stages[-1].length if self.stages else 0

    def first_stage_length(self) -> int:
        return self.stages[0].length

    def validate(self, timings: dict[int, PhaseTiming]) -> None:
        for g in self.greens:
            t = timings[g.phase]
            if not (t.g_min <= g.duration <= t.g_max):
                raise AssertionError(f"green {g} violates [{t.g_min}, {t.g_max}]")
        for i, a in enumerate(self.greens):
            for b in self.greens[i + 1 :]:
                if a.phase != b.phase and conflicts(a.phase, b.phase):
                    if a.start < b.end and b.start < a.end:
                        raise AssertionError(f"conflicting greens overlap: {a} {b}")
        edge = 0
        for st in self.stages:
            if st.start != edge:
                raise AssertionError("stages do not partition the planned span")
            edge = st.start + st.length

    def covers(self, phase: int, start: int, end: int) -> bool:
        return any(g.phase == phase and g.start <= start and end <= g.end for g in self.greens)


def backward_retrieve(table: ValueTable, horizon: int | None = None) -> PhasePlan:
    """Walk the recorded optima back from the horizon and assemble the
    per-phase plan; the plan's delay equals the table value."""
    problem = table.problem
    T = problem.horizon if horizon is None else horizon
    j_best, entry = table.best_entry()
    total = int(table.v[j_best, T, entry])
    s = T
    e = entry
    raw: list[tuple[int, int, int, int]] = []  # (stage j, start, length, entry)
    for j in range(j_best, 0, -1):
        if e >= int(table.n_front[j, s]):
            raise PlanRetrievalError(f"state ({j}, {s}) entry {e} is unreachable")
        x = int(table.x_star[j, s, e])
        if x <= 0 or x > s:
            raise PlanRetrievalError(f"corrupt stage length {x} at ({j}, {s})")
        raw.append((j, s - x, x, e))
        e = int(table.parent[j, s, e])
        s -= x
    if s != 0:
        raise PlanRetrievalError(f"backtracking ended at s={s}, expected 0")
    raw.reverse()

    stages: list[PlannedStage] = []
    greens: list[PlannedGreen] = []
    for j, start, x, ent in raw:
        group = problem.group_of_stage(j)
        decisions = []
        state = start + x
        for ring_idx, (left, through) in enumerate(GROUP_RINGS[group]):
            order_flag = int(table.ring_order[ring_idx][j, state, ent])
            split = int(table.ring_split[ring_idx][j, state, ent])
            order = (through, left) if order_flag == 0 else (left, through)
            decisions.append(RingDecision(order=order, split=split))
            tf = problem.timings[order[0]]
            ts = problem.timings[order[1]]
            greens.append(PlannedGreen(order[0], start, split - tf.clearance))
            greens.append(
                PlannedGreen(order[1], start + split, x - split - ts.clearance)
            )
        stages.append(
            PlannedStage(group=group, start=start, length=x, rings=tuple(decisions))
        )
    greens.sort(key=lambda g: (g.start, g.phase))
    plan = PhasePlan(stages=stages, greens=greens, total_delay=total, horizon=T)
    plan.validate(problem.timings)
    return plan
