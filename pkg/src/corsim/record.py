"""Run event logs and their on-disk form.

A RunRecord is the complete, deterministic trace of one simulation run:
per-vehicle events (entry, stop-bar crossings, exit), signal interval
transitions, and algorithm decision events.  Serialization is gzip CSV with
a schema comment row per stream plus a JSON metadata file; byte-identical
for identical runs.
"""

from __future__ import annotations

import gzip
import hashlib
import io
import json
import os
from dataclasses import dataclass, field

SCHEMA_VERSION = 1

VEHICLE_HEADER = (
    "veh_id,t,event,intersection,approach,turn,sched_t,seg_stopped_s,seg_stops,ff_time_s"
)
SIGNAL_HEADER = "t,int_id,phase,interval"
SOA_HEADER = "t,intersection,phase,xc,la,sx_max,t_star,l_v_star,granted"
PAA_HEADER = "t,intersection,stage_lengths,phase_order,splits,v_horizon"


@dataclass
class RunRecord:
    """In-memory event streams for one run."""

    meta: dict
    vehicle_events: list[tuple] = field(default_factory=list)
    signal_events: list[tuple] = field(default_factory=list)
    soa_events: list[tuple] = field(default_factory=list)
    paa_events: list[tuple] = field(default_factory=list)

    def log_vehicle(self, veh_id, t, event, intersection, approach, turn,
                    sched_t="", seg_stopped="", seg_stops="", ff_time=""):
        self.vehicle_events.append(
            (veh_id, t, event, intersection, approach, turn, sched_t, seg_stopped, seg_stops, ff_time)
        )

    # -- serialization ------------------------------------------------------

    def _stream_bytes(self, name: str, header: str, rows: list[tuple]) -> bytes:
        buf = io.StringIO()
        buf.write(f"#schema,corsim.{name},{SCHEMA_VERSION}\n")
        buf.write(header + "\n")
        for row in rows:
            buf.write(",".join(_fmt(x) for x in row) + "\n")
        return buf.getvalue().encode()

    def save(self, out_dir: str) -> None:
        os.makedirs(out_dir, exist_ok=True)
        streams = {
            "vehicles": (VEHICLE_HEADER, self.vehicle_events),
            "signals": (SIGNAL_HEADER, self.signal_events),
            "soa_decisions": (SOA_HEADER, self.soa_events),
            "paa_plans": (PAA_HEADER, self.paa_events),
        }
        for name, (header, rows) in streams.items():
            raw = self._stream_bytes(name, header, rows)
            path = os.path.join(out_dir, f"{name}.csv.gz")
            with open(path, "wb") as fh:
                with gzip.GzipFile(fileobj=fh, mode="wb", mtime=0) as gz:
                    gz.write(raw)
        meta = dict(self.meta)
        meta["schema_version"] = SCHEMA_VERSION
        with open(os.path.join(out_dir, "meta.json"), "w") as fh:
            json.dump(meta, fh, sort_keys=True, indent=1)
            fh.write("\n")

    @staticmethod
    def load(out_dir: str) -> "RunRecord":
        with open(os.path.join(out_dir, "meta.json")) as fh:
            meta = json.load(fh)
        rec = RunRecord(meta=meta)
        rec.vehicle_events = _read_stream(out_dir, "vehicles")
        rec.signal_events = _read_stream(out_dir, "signals")
        rec.soa_events = _read_stream(out_dir, "soa_decisions")
        rec.paa_events = _read_stream(out_dir, "paa_plans")
        return rec

    def digest(self) -> str:
        h = hashlib.sha256()
        for name, rows in (
            ("vehicles", self.vehicle_events),
            ("signals", self.signal_events),
            ("soa", self.soa_events),
            ("paa", self.paa_events),
        ):
            h.update(name.encode())
            for row in rows:
                h.update(",".join(_fmt(x) for x in row).encode())
        return h.hexdigest()


def _fmt(x) -> str:
    if isinstance(x, float):
        return f"{x:.1f}"
    return str(x)


def _read_stream(out_dir: str, name: str) -> list[tuple]:
    path = os.path.join(out_dir, f"{name}.csv.gz")
    rows = []
    with gzip.open(path, "rt") as fh:
        schema = fh.readline().strip()
        if not schema.startswith("#schema,"):
            raise ValueError(f"{path}: missing schema row")
        fh.readline()  # header
        for line in fh:
            rows.append(tuple(line.rstrip("\n").split(",")))
    return rows
