"""Eight-phase dual-ring actuated controller engine.

Each ring serves its phases in fixed cyclic order, skipping phases without
calls.  A green phase terminates only when its minimum green has been served
and it either gaps out (no detector actuation within the passage time on any
of its channels) against a standing conflicting call, maxes out against a
standing conflicting call, or is forced off by command; an asserted hold
blocks all termination.  Barrier crossings are non-simultaneous-gap-out: a
ring whose phase is ready waits in green until the other ring's phase is
simultaneously gapped or maxed, then both rings cross together.

With ``command_driven=True`` (the PAA drive mode) detector inputs are ignored
entirely and the phase sequence follows the supplied calls/holds/force-offs.

All timing is integer ticks of ``dt`` seconds; identical inputs produce
identical state trajectories.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .core import (
    ALL_PHASES,
    PhaseConfig,
    RING_1,
    RING_2,
    barrier_group_of,
    conflicts,
    other_group,
    phases_in_group,
)

GREEN = "green"
YELLOW = "yellow"
ALL_RED = "all_red"
RED = "red"

_RINGS = (RING_1, RING_2)


class CommandError(ValueError):
    """Raised for a contradictory command; the step is rejected unchanged."""


@dataclass(frozen=True)
class ControllerCommand:
    """Exogenous per-step control: holds, calls and force-offs by phase."""

    holds: frozenset[int] = frozenset()
    calls: frozenset[int] = frozenset()
    force_offs: frozenset[int] = frozenset()

    def validate(self) -> None:
        both = self.holds & self.force_offs
        if both:
            raise CommandError(f"hold and force_off both target phases {sorted(both)}")


EMPTY_COMMAND = ControllerCommand()


def effective_cycle_length(green_starts: list[float], window: int) -> float | None:
    """Mean of successive green-start differences over the last ``window``
    cycles; None when fewer than two starts have been recorded."""
    if len(green_starts) < 2:
        return None
    diffs = [b - a for a, b in zip(green_starts, green_starts[1:])]
    tail = diffs[-window:]
    return sum(tail) / len(tail)


@dataclass
class _RingState:
    phase: int = 0              # 0 = resting in red
    interval: str = RED
    interval_elapsed: int = 0   # ticks in current interval
    pending: int = 0            # phase to enter after clearance
    last_phase: int = 0         # most recently displayed phase (scan anchor)


class RingBarrierController:
    """Dual-ring actuated engine for one intersection."""

    def __init__(
        self,
        phase_configs: dict[int, PhaseConfig],
        dt: float = 0.1,
        start_phases: tuple[int, int] = (2, 6),
        command_driven: bool = False,
    ):
        self.dt = dt
        self.configs = dict(phase_configs)
        self.command_driven = command_driven
        self._t = {}
        for p, cfg in self.configs.items():
            self._t[p] = {
                "min": self._ticks(cfg.min_green),
                "max": self._ticks(cfg.max_green),
                "yellow": self._ticks(cfg.yellow),
                "all_red": self._ticks(cfg.all_red),
                "passage": self._ticks(cfg.passage_time),
                "adv_passage": self._ticks(cfg.advance_passage_time)
                if cfg.advance_passage_time is not None
                else None,
            }
        self.tick = 0
        self.calls = [False] * 9
        self.green_elapsed = [0] * 9
        self.extend_until = [0] * 9
        self.rings = (_RingState(), _RingState())
        self.current_group = barrier_group_of(start_phases[0]) if start_phases[0] else "A"
        self.green_start_history: dict[int, list[int]] = {p: [] for p in ALL_PHASES}
        self.cycle_counter = 0  # phase-2 green starts
        self.events: list[tuple[int, int, str]] = []  # (tick, phase, interval)
        for ring, p in zip(self.rings, start_phases):
            if p:
                self._enter_green(ring, p)

    # -- public views ------------------------------------------------------

    def _ticks(self, seconds: float) -> int:
        return int(round(seconds / self.dt))

    @property
    def active_phases(self) -> list[tuple[int, str]]:
        """(phase, interval) for phases currently displayed (green/yellow)."""
        return [
            (r.phase, r.interval)
            for r in self.rings
            if r.phase and r.interval in (GREEN, YELLOW)
        ]

    def phase_interval(self, phase: int) -> str:
        for r in self.rings:
            if r.phase == phase and r.interval in (GREEN, YELLOW, ALL_RED):
                return r.interval
        return RED

    def green_seconds(self, phase: int) -> float:
        return self.green_elapsed[phase] * self.dt

    def is_gapped(self, phase: int) -> bool:
        return self.tick > self.extend_until[phase]

    def has_conflicting_call(self, phase: int) -> bool:
        return any(self.calls[q] for q in ALL_PHASES if conflicts(phase, q) and q != phase)

    def min_green_met(self, phase: int) -> bool:
        return self.green_elapsed[phase] >= self._t[phase]["min"]

    def at_gapout_boundary(self, phase: int) -> bool:
        """Green, past min green, primary extension expired, and a
        conflicting call standing: the phase would begin terminating now."""
        return (
            self.phase_interval(phase) == GREEN
            and self.min_green_met(phase)
            and self.is_gapped(phase)
            and self.has_conflicting_call(phase)
        )

    def gapout_imminent(self, phase: int) -> bool:
        """True when the next step would hit the gap-out boundary: the last
        instant a hold can arrive to extend the phase."""
        return (
            self.phase_interval(phase) == GREEN
            and self.green_elapsed[phase] + 1 >= self._t[phase]["min"]
            and self.tick + 1 > self.extend_until[phase]
            and self.has_conflicting_call(phase)
        )

    def effective_cycle(self, phase: int = 2, window: int = 5) -> float | None:
        starts = [t * self.dt for t in self.green_start_history[phase]]
        return effective_cycle_length(starts, window)

    # -- stepping ----------------------------------------------------------

    def step(
        self,
        stopbar_act: list[bool] | None = None,
        advance_act: list[bool] | None = None,
        command: ControllerCommand = EMPTY_COMMAND,
    ) -> list[tuple[int, int, str]]:
        """Advance one tick; returns interval-transition events
        (tick, phase, new_interval) emitted during this step."""
        command.validate()
        self.tick += 1
        events_start = len(self.events)

        if not self.command_driven:
            self._apply_detectors(stopbar_act, advance_act)
        for p in command.calls:
            if self.phase_interval(p) != GREEN:
                self.calls[p] = True

        # clearance interval progression
        for ring in self.rings:
            if ring.phase == 0:
                continue
            ring.interval_elapsed += 1
            if ring.interval == YELLOW:
                if ring.interval_elapsed >= self._t[ring.phase]["yellow"]:
                    self._emit(ring.phase, ALL_RED)
                    ring.interval = ALL_RED
                    ring.interval_elapsed = 0
            elif ring.interval == ALL_RED:
                if ring.interval_elapsed >= self._t[ring.phase]["all_red"]:
                    self._emit(ring.phase, RED)
                    ring.phase = 0
                    ring.interval = RED
                    if ring.pending:
                        self._enter_green(ring, ring.pending)
                        ring.pending = 0
            elif ring.interval == GREEN:
                self.green_elapsed[ring.phase] += 1

        self._terminate_and_advance(command)
        return self.events[events_start:]

    def _apply_detectors(self, stopbar_act, advance_act):
        for p in ALL_PHASES:
            sb = stopbar_act is not None and bool(stopbar_act[p])
            adv = advance_act is not None and bool(advance_act[p])
            if not (sb or adv):
                continue
            if self.phase_interval(p) == GREEN:
                t = self._t[p]
                if sb:
                    self.extend_until[p] = max(self.extend_until[p], self.tick + t["passage"])
                if adv and t["adv_passage"] is not None:
                    self.extend_until[p] = max(self.extend_until[p], self.tick + t["adv_passage"])
            else:
                self.calls[p] = True

    def _ready(self, ring: _RingState, command: ControllerCommand) -> bool:
        """Phase may terminate now (gap/max against conflicting call, or
        force-off), min green served, not held."""
        p = ring.phase
        if p == 0:
            return True
        if ring.interval != GREEN:
            return False
        if p in command.holds:
            return False
        if not self.min_green_met(p):
            return False
        if p in command.force_offs:
            return True
        if not self.has_conflicting_call(p):
            return False
        return self.is_gapped(p) or self.green_elapsed[p] >= self._t[p]["max"]

    def _next_called(self, ring_order: tuple[int, ...], after: int) -> int:
        idx = ring_order.index(after)
        for k in range(1, len(ring_order) + 1):
            q = ring_order[(idx + k) % len(ring_order)]
            if q != after and self.calls[q]:
                return q
        return 0

    def _first_called_in_group(self, ring_order: tuple[int, ...], group: str) -> int:
        for q in ring_order:
            if barrier_group_of(q) == group and self.calls[q]:
                return q
        return 0

    def _terminate_and_advance(self, command: ControllerCommand) -> None:
        ready = [self._ready(r, command) for r in self.rings]
        targets = [
            self._next_called(order, ring.phase) if ring.phase else 0
            for order, ring in zip(_RINGS, self.rings)
        ]

        # within-group transitions (including wrap) happen unilaterally
        for i, (order, ring) in enumerate(zip(_RINGS, self.rings)):
            tgt = targets[i]
            if (
                ring.phase
                and ring.interval == GREEN
                and ready[i]
                and tgt
                and barrier_group_of(tgt) == self.current_group
            ):
                self._start_clearance(ring, tgt)
                ready[i] = False
                targets[i] = 0

        # barrier crossing: demand in the other group, and both rings
        # simultaneously gapped/maxed (or resting) with no within-group work
        new_group = other_group(self.current_group)
        cross_demand = any(self.calls[q] for q in phases_in_group(new_group))
        if cross_demand:
            def cross_ready(i: int) -> bool:
                ring = self.rings[i]
                if ring.phase == 0:
                    return ring.pending == 0
                return (
                    ring.interval == GREEN
                    and ready[i]
                    and (targets[i] == 0 or barrier_group_of(targets[i]) == new_group)
                )

            if cross_ready(0) and cross_ready(1):
                for order, ring in zip(_RINGS, self.rings):
                    pend = self._first_called_in_group(order, new_group)
                    if ring.phase:
                        self._start_clearance(ring, pend)
                    else:
                        ring.pending = pend
                self.current_group = new_group

        # resting rings enter a pending or newly called phase when the other
        # ring's display no longer conflicts
        for i, (order, ring) in enumerate(zip(_RINGS, self.rings)):
            if ring.phase:
                continue
            tgt = ring.pending or self._first_called_in_group(order, self.current_group)
            if not tgt:
                continue
            other = self.rings[1 - i]
            if other.phase and conflicts(tgt, other.phase):
                continue
            ring.pending = 0
            self._enter_green(ring, tgt)

    def _start_clearance(self, ring: _RingState, pending: int) -> None:
        self._emit(ring.phase, YELLOW)
        ring.interval = YELLOW
        ring.interval_elapsed = 0
        ring.pending = pending

    def _enter_green(self, ring: _RingState, phase: int) -> None:
        ring.phase = phase
        ring.last_phase = phase
        ring.interval = GREEN
        ring.interval_elapsed = 0
        self.green_elapsed[phase] = 0
        self.extend_until[phase] = self.tick + self._t[phase]["passage"]
        self.calls[phase] = False
        self.green_start_history[phase].append(self.tick)
        if phase == 2:
            self.cycle_counter += 1
        self._emit(phase, GREEN)

    def _emit(self, phase: int, interval: str) -> None:
        self.events.append((self.tick, phase, interval))

    # -- safety ------------------------------------------------------------

    def check_safety(self) -> None:
        """Assert no two displayed (green/yellow) phases conflict."""
        act = self.active_phases
        for i in range(len(act)):
            for j in range(i + 1, len(act)):
                a, b = act[i][0], act[j][0]
                if conflicts(a, b):
                    raise AssertionError(
                        f"conflicting phases displayed: {a} ({act[i][1]}) and {b} ({act[j][1]})"
                    )
