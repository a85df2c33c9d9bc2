"""Post-processing: delay, travel times, percent-on-green, coordination
diagrams.

Delay is a travel-time difference against the free-flow traversal of the
same route, attributed per movement by segment (a segment closes at each
stop-bar crossing), so arterial and non-arterial means recombine exactly to
the total.  Vehicles still on the network at the end of a run are flagged
and carry delay accrued to end-of-run in the vehicle-level figures.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .core import Approach, CorridorGeometry, PHASE_OF, Turn
from .network import build_network
from .record import RunRecord

BOX_TRANSIT = 2.0  # matches SimulationDefaults.box_transit_time


@dataclass
class VehicleTrace:
    veh_id: int
    sched: float
    entered: float
    movement: tuple[int, str, str]
    ff_time: float
    crossings: list[tuple[float, int, str, str, float, int]] = field(default_factory=list)
    exit_time: float | None = None

    def complete(self) -> bool:
        return self.exit_time is not None


def parse_vehicles(record: RunRecord) -> dict[int, VehicleTrace]:
    out: dict[int, VehicleTrace] = {}
    for row in record.vehicle_events:
        veh, t, event, inter, appr, turn, sched, seg_stopped, seg_stops, ff = (
            list(row) + [""] * (10 - len(row))
        )
        veh = int(veh)
        t = float(t)
        if event == "enter":
            out[veh] = VehicleTrace(
                veh_id=veh,
                sched=float(sched),
                entered=t,
                movement=(int(inter), appr, turn),
                ff_time=float(ff),
            )
        elif event == "cross":
            if veh in out:
                out[veh].crossings.append(
                    (t, int(inter), appr, turn, float(seg_stopped or 0.0), int(seg_stops or 0))
                )
        elif event == "exit":
            if veh in out:
                out[veh].exit_time = t
    return out


def measured_vehicles(
    record: RunRecord, warmup: float, duration: float
) -> dict[int, VehicleTrace]:
    lo, hi = warmup, warmup + duration
    return {
        v: tr for v, tr in parse_vehicles(record).items() if lo <= tr.sched < hi
    }


@dataclass
class DelayReport:
    total: float
    arterial: float
    non_arterial: float
    per_movement: dict[tuple[int, str, str], tuple[float, int]]
    stops_per_vehicle: float
    vehicle_mean_delay: float
    n_vehicles: int
    n_segments: int
    incomplete: int


def control_delay(
    record: RunRecord,
    geometry: CorridorGeometry | None = None,
    warmup: float | None = None,
    duration: float | None = None,
) -> DelayReport:
    geometry = geometry or CorridorGeometry()
    warmup = record.meta.get("warmup_s", 0.0) if warmup is None else warmup
    duration = record.meta.get("duration_s", math.inf) if duration is None else duration
    end_time = float(record.meta.get("end_time_s", math.inf))
    net = build_network(geometry)
    link_len = {
        (l.intersection, l.approach.value): l.length for l in net.links
    }
    traces = measured_vehicles(record, warmup, duration)

    seg_delay: dict[tuple[int, str, str], list[float]] = {}
    total_stops = 0
    veh_delays = []
    incomplete = 0
    for tr in traces.values():
        datum = tr.sched
        for (t, inter, appr, turn, seg_stopped, seg_stops) in tr.crossings:
            length = link_len[(inter, appr)]
            d = (t - datum) - length / geometry.free_flow_speed
            seg_delay.setdefault((inter, appr, turn), []).append(max(0.0, d))
            total_stops += seg_stops
            datum = t + (0.0 if turn == Turn.THROUGH.value else BOX_TRANSIT)
        if tr.complete():
            veh_delays.append(max(0.0, (tr.exit_time - tr.sched) - tr.ff_time))
        else:
            incomplete += 1
            if math.isfinite(end_time):
                veh_delays.append(max(0.0, (end_time - tr.sched) - tr.ff_time))

    def mean(xs):
        return sum(xs) / len(xs) if xs else 0.0

    per_movement = {
        key: (mean(v), len(v)) for key, v in sorted(seg_delay.items())
    }
    art, non = [], []
    for (inter, appr, turn), vals in seg_delay.items():
        if appr in (Approach.EB.value, Approach.WB.value) and turn == Turn.THROUGH.value:
            art.extend(vals)
        else:
            non.extend(vals)
    n_veh = len(traces)
    return DelayReport(
        total=mean(art + non),
        arterial=mean(art),
        non_arterial=mean(non),
        per_movement=per_movement,
        stops_per_vehicle=(total_stops / n_veh) if n_veh else 0.0,
        vehicle_mean_delay=mean(veh_delays),
        n_vehicles=n_veh,
        n_segments=len(art) + len(non),
        incomplete=incomplete,
    )


def travel_time_cdf(
    record: RunRecord,
    direction: str,
    geometry: CorridorGeometry | None = None,
    warmup: float | None = None,
    duration: float | None = None,
) -> list[float]:
    """End-to-end corridor travel times (scheduled entry to final stop bar)
    of through vehicles that crossed every intersection, sorted."""
    if direction not in (Approach.EB.value, Approach.WB.value):
        raise ValueError("direction must be EB or WB")
    geometry = geometry or CorridorGeometry()
    warmup = record.meta.get("warmup_s", 0.0) if warmup is None else warmup
    duration = record.meta.get("duration_s", math.inf) if duration is None else duration
    n_int = geometry.n_intersections
    times = []
    for tr in measured_vehicles(record, warmup, duration).values():
        through = [
            c for c in tr.crossings if c[2] == direction and c[3] == Turn.THROUGH.value
        ]
        if len(through) == n_int and tr.complete():
            times.append(through[-1][0] - tr.sched)
    return sorted(times)


def percentile(samples: list[float], q: float) -> float:
    if not samples:
        raise ValueError("no samples")
    if len(samples) == 1:
        return samples[0]
    pos = (len(samples) - 1) * q
    lo = int(math.floor(pos))
    hi = min(lo + 1, len(samples) - 1)
    frac = pos - lo
    return samples[lo] * (1 - frac) + samples[hi] * frac


def _green_intervals(record: RunRecord, intersection: int, phase: int, end_time: float):
    """[start, end) green intervals from the signal event stream."""
    events = []
    for (t, i, p, interval) in record.signal_events:
        if int(i) == intersection and int(p) == phase:
            events.append((float(t), interval))
    events.sort()
    out = []
    start = None
    for t, interval in events:
        if interval == "green" and start is None:
            start = t
        elif interval != "green" and start is not None:
            out.append((start, t))
            start = None
    if start is not None:
        out.append((start, end_time))
    return out


_PHASE_MOVEMENT = {2: "EB", 6: "WB", 4: "NB", 8: "SB"}


def arrivals_on_phase(
    record: RunRecord, intersection: int, phase: int,
    warmup: float | None = None, duration: float | None = None,
) -> list[float]:
    """Projected uninterrupted stop-bar arrival instants (crossing time
    minus stopped time) of the phase's through vehicles."""
    appr = _PHASE_MOVEMENT[phase]
    warmup = record.meta.get("warmup_s", 0.0) if warmup is None else warmup
    duration = record.meta.get("duration_s", math.inf) if duration is None else duration
    times = []
    for tr in measured_vehicles(record, warmup, duration).values():
        for (t, inter, a, turn, seg_stopped, _stops) in tr.crossings:
            if inter == intersection and a == appr and turn == Turn.THROUGH.value:
                times.append(t - seg_stopped)
    return sorted(times)


def percent_on_green(
    record: RunRecord, intersection: int, phase: int,
    warmup: float | None = None, duration: float | None = None,
) -> float | None:
    """Fraction of projected arrivals falling inside the phase's green;
    None when the phase saw no arrivals."""
    if phase not in (2, 6):
        raise ValueError("percent-on-green applies to arterial phases 2 and 6")
    end_time = float(record.meta.get("end_time_s", math.inf))
    greens = _green_intervals(record, intersection, phase, end_time)
    arrivals = arrivals_on_phase(record, intersection, phase, warmup, duration)
    if not arrivals:
        return None
    hits = 0
    for t in arrivals:
        for (a, b) in greens:
            if a <= t < b:
                hits += 1
                break
    return hits / len(arrivals)


def coordination_diagram_export(
    record: RunRecord, intersection: int, phase: int,
    warmup: float | None = None, duration: float | None = None,
) -> list[tuple]:
    """Rows for an effective-cycle coordination diagram: cycles delimited by
    the phase's green starts; arrival rows, interval rows, and granted
    secondary-extension rows, all in time-in-cycle coordinates."""
    end_time = float(record.meta.get("end_time_s", math.inf))
    starts = [
        float(t)
        for (t, i, p, interval) in record.signal_events
        if int(i) == intersection and int(p) == phase and interval == "green"
    ]
    starts.sort()
    if not starts:
        return []
    edges = starts + [end_time]

    def cycle_of(t: float) -> tuple[int, float] | None:
        if t < edges[0]:
            return None
        for k in range(len(starts)):
            if edges[k] <= t < edges[k + 1]:
                return k, t - edges[k]
        return None

    rows: list[tuple] = []
    events = [
        (float(t), interval)
        for (t, i, p, interval) in record.signal_events
        if int(i) == intersection and int(p) == phase
    ]
    events.sort()
    for idx, (t, interval) in enumerate(events):
        nxt = events[idx + 1][0] if idx + 1 < len(events) else end_time
        loc = cycle_of(t)
        if loc is None:
            continue
        k, tic = loc
        rows.append((k, "interval", interval, round(tic, 1), round(tic + (nxt - t), 1)))
    for t in arrivals_on_phase(record, intersection, phase, warmup, duration):
        loc = cycle_of(t)
        if loc is None:
            continue
        k, tic = loc
        rows.append((k, "arrival", "", round(tic, 1), ""))
    for row in record.soa_events:
        t, i, p = float(row[0]), int(row[1]), int(row[2])
        granted = str(row[8]) in ("1", "True")
        if i == intersection and p == phase and granted:
            loc = cycle_of(t)
            if loc is None:
                continue
            k, tic = loc
            rows.append((k, "secondary_extension", "", round(tic, 1), round(tic + float(row[6]), 1)))
    rows.sort(key=lambda r: (r[0], str(r[1]), str(r[3])))
    return rows


PHASE_LANES_DEFAULT = {1: 1, 3: 1, 5: 1, 7: 1, 2: 2, 4: 2, 6: 2, 8: 2}


def measured_xc(
    record: RunRecord,
    intersection: int,
    window: int = 5,
    h_sat: float = 2.0,
    lost_time: float = 16.0,
    warmup: float | None = None,
) -> float | None:
    """Run-mean critical degree of utilization, re-derived from the record:
    stop-bar crossings per phase over successive ``window``-cycle spans of
    phase 2, against saturation flow, inflated by C/(C - L)."""
    warmup = record.meta.get("warmup_s", 0.0) if warmup is None else warmup
    end_time = float(record.meta.get("end_time_s", math.inf))
    starts = sorted(
        float(t)
        for (t, i, p, interval) in record.signal_events
        if int(i) == intersection and int(p) == 2 and interval == "green"
    )
    if len(starts) < window + 1:
        return None
    crossings = []
    for row in record.vehicle_events:
        if row[2] != "cross":
            continue
        if int(row[3]) != intersection:
            continue
        phase = PHASE_OF[(Approach(row[4]), Turn(row[5]))]
        crossings.append((float(row[1]), phase))
    crossings.sort()
    samples = []
    k = window
    while k < len(starts):
        t0, t1 = starts[k - window], starts[k]
        if t0 < warmup or t1 > end_time:
            k += window
            continue
        span = t1 - t0
        cycle = span / window
        if cycle <= lost_time:
            k += window
            continue
        counts = {p: 0 for p in range(1, 9)}
        for (t, p) in crossings:
            if t0 <= t < t1:
                counts[p] += 1
        ratios = {
            p: (counts[p] / span) / (PHASE_LANES_DEFAULT[p] / h_sat)
            for p in range(1, 9)
        }
        crit_a = max(ratios[1] + ratios[2], ratios[5] + ratios[6])
        crit_b = max(ratios[3] + ratios[4], ratios[7] + ratios[8])
        samples.append((crit_a + crit_b) * cycle / (cycle - lost_time))
        k += window
    if not samples:
        return None
    return sum(samples) / len(samples)


def summarize(record: RunRecord, geometry: CorridorGeometry | None = None) -> dict:
    """Headline per-run numbers consumed by the experiment aggregates."""
    geometry = geometry or CorridorGeometry()
    rep = control_delay(record, geometry)
    out = {
        "total_delay_s_per_veh": round(rep.vehicle_mean_delay, 3),
        "segment_delay_s": round(rep.total, 3),
        "arterial_delay_s": round(rep.arterial, 3),
        "non_arterial_delay_s": round(rep.non_arterial, 3),
        "stops_per_vehicle": round(rep.stops_per_vehicle, 4),
        "n_vehicles": rep.n_vehicles,
        "incomplete": rep.incomplete,
    }
    for d in ("EB", "WB"):
        cdf = travel_time_cdf(record, d, geometry)
        out[f"travel_time_median_{d}"] = round(percentile(cdf, 0.5), 2) if cdf else None
        out[f"travel_time_n_{d}"] = len(cdf)
    for i in range(geometry.n_intersections):
        for p in (2, 6):
            pog = percent_on_green(record, i, p)
            out[f"pog_i{i}_p{p}"] = round(pog, 4) if pog is not None else None
        xc = measured_xc(record, i)
        out[f"xc_i{i}"] = round(xc, 4) if xc is not None else None
    return out
