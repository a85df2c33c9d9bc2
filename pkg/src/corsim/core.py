"""Shared domain vocabulary: phases, rings, movements, geometry, time, config.

Phase numbering follows the standard eight-phase dual-ring convention for an
east-west arterial:

    ring 1: 1 (WB left), 2 (EB through), 3 (SB left), 4 (NB through)
    ring 2: 5 (EB left), 6 (WB through), 7 (NB left), 8 (SB through)

Barrier group A = {1, 2, 5, 6} (arterial street), group B = {3, 4, 7, 8}
(cross street).  Right turns share the through phase of their approach.
All distances are feet, all times seconds, speeds ft/s.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

ARTERIAL_THROUGH_PHASES = (2, 6)
RING_1 = (1, 2, 3, 4)
RING_2 = (5, 6, 7, 8)
BARRIER_GROUP_A = frozenset({1, 2, 5, 6})
BARRIER_GROUP_B = frozenset({3, 4, 7, 8})
ALL_PHASES = tuple(range(1, 9))

#: Standard sensing ranges exercised by the experiment matrix (feet).
TESTED_SENSING_RANGES = (165, 330, 660, 1000, 1500, 2000)

FREE_FLOW_SPEED = 66.0       # ft/s (45 mph)
ETA_FLOOR_SPEED = 5.0        # ft/s, floor for stop-bar ETA projection
QUEUE_SPEED_THRESHOLD = 5.0  # ft/s, below this a vehicle can be "queued"
QUEUE_DISTANCE_THRESHOLD = 100.0  # ft, queued classification zone
VEHICLE_LENGTH = 16.0        # ft


class Approach(str, enum.Enum):
    EB = "EB"
    WB = "WB"
    NB = "NB"
    SB = "SB"


class Turn(str, enum.Enum):
    LEFT = "left"
    THROUGH = "through"
    RIGHT = "right"


#: (approach, turn) -> NEMA phase.
PHASE_OF = {
    (Approach.EB, Turn.THROUGH): 2,
    (Approach.EB, Turn.RIGHT): 2,
    (Approach.EB, Turn.LEFT): 5,
    (Approach.WB, Turn.THROUGH): 6,
    (Approach.WB, Turn.RIGHT): 6,
    (Approach.WB, Turn.LEFT): 1,
    (Approach.NB, Turn.THROUGH): 4,
    (Approach.NB, Turn.RIGHT): 4,
    (Approach.NB, Turn.LEFT): 7,
    (Approach.SB, Turn.THROUGH): 8,
    (Approach.SB, Turn.RIGHT): 8,
    (Approach.SB, Turn.LEFT): 3,
}

#: Phase whose green hosts the permissive window for each left-turn phase
#: (the opposing through).
OPPOSING_THROUGH_OF_LEFT = {5: 6, 1: 2, 7: 8, 3: 4}


def ring_of(phase: int) -> int:
    """Ring index (1 or 2) of a phase."""
    _check_phase(phase)
    return 1 if phase <= 4 else 2


def barrier_group_of(phase: int) -> str:
    """'A' for arterial-street phases, 'B' for cross-street phases."""
    _check_phase(phase)
    return "A" if phase in BARRIER_GROUP_A else "B"


def phases_in_group(group: str) -> frozenset[int]:
    return BARRIER_GROUP_A if group == "A" else BARRIER_GROUP_B


def other_group(group: str) -> str:
    return "B" if group == "A" else "A"


def conflicts(a: int, b: int) -> bool:
    """True iff phases a and b may not be green simultaneously.

    Compatible pairs are exactly the cross-ring pairs inside one barrier
    group; everything else (same ring, or opposite sides of the barrier)
    conflicts.
    """
    _check_phase(a)
    _check_phase(b)
    return ring_of(a) == ring_of(b) or barrier_group_of(a) != barrier_group_of(b)


def eta_to_stopbar(distance: float, speed: float, floor_speed: float = ETA_FLOOR_SPEED) -> float:
    """Projected seconds to the stop bar at constant (floored) speed."""
    if distance < 0:
        raise ValueError(f"distance must be >= 0, got {distance}")
    return distance / max(speed, floor_speed)


def _check_phase(p: int) -> None:
    if p not in ALL_PHASES:
        raise ValueError(f"phase must be in 1..8, got {p!r}")


@dataclass(frozen=True)
class PhaseConfig:
    """Actuated timing parameters for one phase.

    ``passage_time`` applies to stop-bar detector actuations,
    ``advance_passage_time`` to the upstream advance detector (arterial
    through phases only; None elsewhere).  Clearance r = yellow + all_red.
    """

    min_green: float = 5.0
    max_green: float = 35.0
    yellow: float = 4.0
    all_red: float = 1.0
    passage_time: float = 2.1
    advance_passage_time: float | None = None

    def __post_init__(self):
        if self.min_green > self.max_green:
            raise ValueError("min_green must be <= max_green")
        for name in ("min_green", "max_green", "yellow", "all_red", "passage_time"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")

    @property
    def clearance(self) -> float:
        return self.yellow + self.all_red


def default_phase_configs(
    min_green: float = 5.0,
    max_green_arterial: float = 60.0,
    max_green_minor: float = 35.0,
    yellow: float = 4.0,
    all_red: float = 1.0,
    passage_stopbar: float = 2.1,
    passage_advance: float = 3.0,
) -> dict[int, PhaseConfig]:
    """Per-phase timing table: 60 s max on arterial throughs, 35 s elsewhere,
    advance-detector passage only on phases 2 and 6."""
    out = {}
    for p in ALL_PHASES:
        arterial_through = p in ARTERIAL_THROUGH_PHASES
        out[p] = PhaseConfig(
            min_green=min_green,
            max_green=max_green_arterial if arterial_through else max_green_minor,
            yellow=yellow,
            all_red=all_red,
            passage_time=passage_stopbar,
            advance_passage_time=passage_advance if arterial_through else None,
        )
    return out


@dataclass(frozen=True)
class Movement:
    """One signalized movement: an approach direction and turn at an
    intersection, mapped to its NEMA phase."""

    intersection: int
    approach: Approach
    turn: Turn

    @property
    def phase(self) -> int:
        return PHASE_OF[(self.approach, self.turn)]

    def key(self) -> str:
        return f"i{self.intersection}.{self.approach.value}.{self.turn.value}"

    @staticmethod
    def from_key(key: str) -> "Movement":
        m = key.split(".")
        if len(m) != 3 or not m[0].startswith("i"):
            raise ValueError(f"bad movement key {key!r}, expected iN.<approach>.<turn>")
        return Movement(int(m[0][1:]), Approach(m[1]), Turn(m[2]))


@dataclass(frozen=True)
class SensingRange:
    """Maximum distance from the stop bar at which trajectories are
    observable."""

    range_ft: float

    def __post_init__(self):
        if self.range_ft <= 0:
            raise ValueError("sensing range must be > 0")


@dataclass(frozen=True)
class CorridorGeometry:
    """Three-intersection arterial corridor geometry.

    ``intersection_positions`` are stop-bar stations along the arterial for
    eastbound travel; links abut so the distance between adjacent positions
    is the internal approach length.  Entry approaches (arterial ends and
    all cross-street legs) are ``approach_length`` long so the largest
    sensing range stays fully observable.
    """

    intersection_positions: tuple[float, ...] = (2200.0, 3520.0, 4840.0)
    approach_length: float = 2200.0
    through_lanes: int = 2
    left_lanes: int = 1
    stopbar_detector_length: float = 40.0
    advance_detector_offset: float = 330.0
    free_flow_speed: float = FREE_FLOW_SPEED

    def __post_init__(self):
        pos = self.intersection_positions
        if any(b <= a for a, b in zip(pos, pos[1:])):
            raise ValueError("intersection positions must be strictly increasing")
        if self.approach_length < max(TESTED_SENSING_RANGES):
            raise ValueError(
                "entry approaches must be at least as long as the largest "
                f"tested sensing range ({max(TESTED_SENSING_RANGES)} ft)"
            )

    @property
    def n_intersections(self) -> int:
        return len(self.intersection_positions)

    def internal_link_length(self, upstream: int) -> float:
        """Arterial link length from intersection ``upstream`` to the next."""
        p = self.intersection_positions
        return p[upstream + 1] - p[upstream]


@dataclass(frozen=True)
class ScenarioConfig:
    """Demand scenario: entry volumes and downstream turn fractions.

    ``demand`` is keyed by entry movements, i.e. the movement executed at
    the first intersection a vehicle reaches (arterial EB enters at the
    west end / intersection 0, WB at the east end / intersection 2, cross
    street NB/SB at their own intersection).  Vehicles that stay on the
    arterial pick their movement at each further intersection from
    ``turn_fractions[(intersection, approach)]``.
    """

    name: str
    demand: dict[Movement, float]
    turn_fractions: dict[tuple[int, Approach], dict[Turn, float]]
    warmup: float = 600.0
    duration: float = 3600.0

    def __post_init__(self):
        errors = self.validate()
        if errors:
            raise ValueError("; ".join(errors))

    def validate(self) -> list[str]:
        errors = []
        for mv, rate in self.demand.items():
            if rate < 0:
                errors.append(f"demand for {mv.key()} is negative ({rate})")
        for (i, app), fr in self.turn_fractions.items():
            total = sum(fr.values())
            if abs(total - 1.0) > 1e-9:
                errors.append(
                    f"turn fractions for i{i}.{app.value} sum to {total}, expected 1"
                )
            if any(v < 0 for v in fr.values()):
                errors.append(f"turn fractions for i{i}.{app.value} contain negatives")
        if self.warmup < 0 or self.duration <= 0:
            errors.append("warmup must be >= 0 and duration > 0")
        return errors

    def entry_movements(self) -> list[Movement]:
        return sorted(self.demand, key=lambda m: m.key())


@dataclass
class SimulationDefaults:
    """Knobs shared by the microsim and the control strategies."""

    dt: float = 0.1                  # controller / simulation tick, seconds
    saturation_headway: float = 2.0  # s/veh queue discharge headway
    startup_lost_time: float = 2.0   # s after green onset before discharge
    permissive_left_gap: float = 4.5  # s opposing gap for permitted lefts
    right_turn_speed: float = 22.0   # ft/s inside right_turn_slow_zone
    right_turn_slow_zone: float = 150.0  # ft before the stop bar
    min_standstill_gap: float = 8.0  # ft bumper-to-bumper in queue
    following_time_gap: float = 1.3  # s speed-dependent spacing term
    comfortable_decel: float = 10.0  # ft/s^2, yellow commitment rule
    box_transit_time: float = 2.0    # s virtual transit for turning routes

    def ticks(self, seconds: float) -> int:
        return int(round(seconds / self.dt))


PHASE_LANES = {  # lanes served by each phase given 2 through + 1 left lane
    1: 1, 3: 1, 5: 1, 7: 1,  # protected lefts: single left lane
    2: 2, 4: 2, 6: 2, 8: 2,  # throughs (+ rights sharing): two lanes
}
