"""Range-limited trajectory feed and per-phase arrival tables.

This is the single data pathway both adaptive algorithms consume: vehicles
inbound to an intersection are observable only within the sensing range,
moving vehicles are projected to the stop bar at their instantaneous speed
(floored), and slow vehicles near the bar are classified as queued.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import (
    ALL_PHASES,
    ETA_FLOOR_SPEED,
    Movement,
    QUEUE_DISTANCE_THRESHOLD,
    QUEUE_SPEED_THRESHOLD,
    SensingRange,
    eta_to_stopbar,
)


@dataclass(frozen=True)
class SensedVehicle:
    """One range-filtered trajectory observation."""

    vehicle_id: int
    movement: Movement
    distance_to_stopbar: float
    speed: float
    timestamp: float

    @property
    def phase(self) -> int:
        return self.movement.phase

    @property
    def queued(self) -> bool:
        return (
            self.speed < QUEUE_SPEED_THRESHOLD
            and self.distance_to_stopbar <= QUEUE_DISTANCE_THRESHOLD
        )


class HorizonError(ValueError):
    """Lookup beyond the table's sensing horizon."""


@dataclass
class ArrivalTable:
    """Per-phase projected stop-bar arrivals in 1 s bins plus initial queues.

    ``counts[p]`` is an integer array of length ``horizon``; bin k holds the
    vehicles whose projected arrival falls in [k, k+1).  Bins beyond the
    sensed information are zero, never extrapolated.
    """

    horizon: int
    counts: dict[int, np.ndarray]
    initial_queue: dict[int, int]

    @staticmethod
    def empty(horizon: int) -> "ArrivalTable":
        return ArrivalTable(
            horizon=horizon,
            counts={p: np.zeros(horizon, dtype=np.int64) for p in ALL_PHASES},
            initial_queue={p: 0 for p in ALL_PHASES},
        )

    def total_sensed(self) -> int:
        return int(sum(arr.sum() for arr in self.counts.values())) + sum(
            self.initial_queue.values()
        )

    def phase_bins(self, phase: int) -> np.ndarray:
        return self.counts[phase]


def filter_by_range(
    vehicles: list[SensedVehicle],
    intersection: int,
    sensing_range: SensingRange,
) -> list[SensedVehicle]:
    """Vehicles inbound to ``intersection`` within the sensing range.

    Vehicles past the stop bar carry a negative distance upstream of it and
    are excluded.
    """
    r = sensing_range.range_ft
    return [
        v
        for v in vehicles
        if v.movement.intersection == intersection and 0 <= v.distance_to_stopbar <= r
    ]


def build_arrival_table(
    sensed: list[SensedVehicle],
    horizon: int,
    floor_speed: float = ETA_FLOOR_SPEED,
) -> ArrivalTable:
    """Bin moving vehicles at floor(ETA) and classify slow near-bar vehicles
    as initial queue; every sensed vehicle lands in exactly one place.

    The table is sized to cover the worst-case projection (distance at floor
    speed) so no observation is dropped, even if that exceeds ``horizon``.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1 second")
    max_eta = 0
    for v in sensed:
        if not v.queued:
            max_eta = max(max_eta, int(math.floor(eta_to_stopbar(v.distance_to_stopbar, v.speed, floor_speed))))
    table = ArrivalTable.empty(max(horizon, max_eta + 1))
    for v in sensed:
        if v.queued:
            table.initial_queue[v.phase] += 1
        else:
            b = int(math.floor(eta_to_stopbar(v.distance_to_stopbar, v.speed, floor_speed)))
            table.counts[v.phase][b] += 1
    return table


def cumulative_arrivals(table: ArrivalTable, phase: int, t: int) -> int:
    """Projected arrivals for ``phase`` in bins 0..t inclusive."""
    if t < 0:
        raise ValueError("t must be >= 0")
    if t > table.horizon:
        raise HorizonError(f"t={t} is beyond the sensing horizon ({table.horizon})")
    return int(table.counts[phase][: t + 1].sum())
