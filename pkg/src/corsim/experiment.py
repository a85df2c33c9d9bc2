"""Batch execution of the scenario x strategy x sensing-range x seed matrix
and aggregation into the comparison datasets.

Each cell writes its event-log bundle plus a summary under a directory named
by a content hash of its configuration, so reruns skip completed work and
reproduce byte-identical aggregates.  Failed cells are quarantined and
reported; the matrix keeps going.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import statistics
import time
from concurrent.futures import ProcessPoolExecutor

from . import metrics
from .config import ExperimentConfig, load_experiment
from .core import SensingRange
from .microsim import SimConfig, Simulation
from .paa import PriorityWindow
from .record import RunRecord
from .strategies import make_supervisor


def cell_digest(exp: ExperimentConfig, scenario: str, strategy: str, rng: float, seed: int) -> str:
    payload = exp.digest_payload(scenario, strategy, rng, seed)
    blob = json.dumps(payload, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def cell_dir(exp: ExperimentConfig, scenario: str, strategy: str, rng: float, seed: int) -> str:
    digest = cell_digest(exp, scenario, strategy, rng, seed)
    tag = f"{scenario}_{strategy}_{int(rng)}_{seed}_{digest}"
    return os.path.join(exp.matrix.output_dir, "runs", tag)


def priority_provider_for(exp: ExperimentConfig, scenario: str):
    """Cyclic arterial priority windows generated from the CA baseline plan:
    the core of each coordinated green, repeated at the plan's cycle."""
    plan = exp.plans.get(scenario)
    if plan is None or not exp.paa_priority:
        return None
    frac = exp.paa_priority_core_fraction
    clearance = int(round(plan.clearance))

    def provider(intersection: int, now_s: float, horizon: int) -> list[PriorityWindow]:
        out = []
        cycle = plan.cycle
        offset = plan.offsets[intersection]
        for phase in plan.coordinated:
            gs, ge = plan.green_window(intersection, phase)
            mid = (gs + ge) / 2.0
            half = (ge - gs) * frac / 2.0
            k0 = int(math.floor((now_s - offset) / cycle)) - 1
            k1 = k0 + int(math.ceil(horizon / cycle)) + 2
            for k in range(k0, k1 + 1):
                lo = offset + k * cycle + mid - half - now_s
                hi = offset + k * cycle + mid + half - now_s
                lo = int(round(max(lo, 0)))
                hi = int(round(min(hi, horizon - clearance)))
                if hi - lo >= 2:
                    out.append(PriorityWindow(phase=phase, start=lo, end=hi))
        return out

    return provider


def build_simulation(exp: ExperimentConfig, scenario: str, strategy: str, rng: float, seed: int) -> Simulation:
    sc = exp.scenarios[scenario]
    if rng > 0:
        SensingRange(rng)  # validates
    cfg = SimConfig(
        scenario=sc,
        strategy=strategy,
        sensing_range=rng,
        seed=seed,
        geometry=exp.geometry,
        phase_configs=exp.phase_configs,
        defaults=exp.defaults,
    )
    sup = make_supervisor(
        strategy,
        rng,
        exp.defaults,
        exp.phase_configs,
        soa_params=exp.soa_params,
        ca_plan=exp.plans.get(scenario),
        paa_horizon=exp.paa_horizon,
        paa_stage_cap=exp.paa_stage_cap,
        priority_provider=priority_provider_for(exp, scenario),
    )
    return Simulation(cfg, supervisors=[sup])


def run_cell(exp: ExperimentConfig, scenario: str, strategy: str, rng: float, seed: int) -> dict:
    """Run one cell unless its completed output already exists."""
    out = cell_dir(exp, scenario, strategy, rng, seed)
    digest = cell_digest(exp, scenario, strategy, rng, seed)
    meta_path = os.path.join(out, "meta.json")
    summary_path = os.path.join(out, "summary.json")
    if os.path.exists(meta_path) and os.path.exists(summary_path):
        with open(summary_path) as fh:
            summary = json.load(fh)
        if summary.get("config_digest") == digest:
            summary["resumed"] = True
            return summary
    t0 = time.time()
    sim = build_simulation(exp, scenario, strategy, rng, seed)
    record = sim.run()
    record.meta["config_digest"] = digest
    wall = time.time() - t0
    record.save(out)
    summary = metrics.summarize(record, exp.geometry)
    summary.update(
        scenario=scenario,
        strategy=strategy,
        sensing_range_ft=rng,
        seed=seed,
        config_digest=digest,
        wall_s=round(wall, 2),
        record_digest=record.digest(),
        dir=out,
    )
    with open(summary_path, "w") as fh:
        json.dump(summary, fh, sort_keys=True, indent=1)
        fh.write("\n")
    summary["resumed"] = False
    return summary


def _worker(args) -> tuple[tuple, dict | None, str | None]:
    config_path, cell = args
    exp = load_experiment(config_path)
    try:
        return cell, run_cell(exp, *cell), None
    except Exception as e:  # quarantine this cell, keep the matrix going
        return cell, None, f"{type(e).__name__}: {e}"


def run_matrix(exp: ExperimentConfig, jobs: int = 1, seed_offset: int = 0) -> dict:
    cells = [
        (sc, st, rng, seed + seed_offset)
        for (sc, st, rng, seed) in exp.matrix.cells()
    ]
    results: dict[tuple, dict] = {}
    failures: dict[tuple, str] = {}
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for cell, summary, err in pool.map(
                _worker, [(exp.source_path, c) for c in cells]
            ):
                if err is None:
                    results[cell] = summary
                else:
                    failures[cell] = err
    else:
        for cell in cells:
            try:
                results[cell] = run_cell(exp, *cell)
            except Exception as e:
                failures[cell] = f"{type(e).__name__}: {e}"
    agg = aggregate(exp, results, failures)
    return agg


def _mean_sd(values: list[float]) -> tuple[float, float]:
    m = statistics.fmean(values)
    sd = statistics.stdev(values) if len(values) > 1 else 0.0
    return m, sd


def aggregate(exp: ExperimentConfig, results: dict[tuple, dict], failures: dict[tuple, str]) -> dict:
    """Fig 2-5 dataset families plus a machine-readable summary."""
    out_dir = exp.matrix.output_dir
    os.makedirs(out_dir, exist_ok=True)
    ordered = sorted(results.items(), key=lambda kv: kv[0])

    rows2 = ["scenario,strategy,sensing_range_ft,seed,total_delay_s_per_veh"]
    for (sc, st, rng, seed), s in ordered:
        rows2.append(f"{sc},{st},{int(rng)},{seed},{s['total_delay_s_per_veh']}")
    rows2s = ["scenario,strategy,sensing_range_ft,mean_delay_s,sd_delay_s,n_seeds"]
    groups: dict[tuple, list[float]] = {}
    for (sc, st, rng, _seed), s in ordered:
        groups.setdefault((sc, st, rng), []).append(s["total_delay_s_per_veh"])
    for (sc, st, rng), vals in sorted(groups.items()):
        m, sd = _mean_sd(vals)
        rows2s.append(f"{sc},{st},{int(rng)},{m:.3f},{sd:.3f},{len(vals)}")
    _write(out_dir, "fig2_total_delay_runs.csv", rows2)
    _write(out_dir, "fig2_total_delay.csv", rows2s)

    rows3 = [
        "scenario,strategy,sensing_range_ft,arterial_delay_s,non_arterial_delay_s,"
        "arterial_sd,non_arterial_sd,n_seeds"
    ]
    g3: dict[tuple, list[tuple[float, float]]] = {}
    for (sc, st, rng, _seed), s in ordered:
        g3.setdefault((sc, st, rng), []).append(
            (s["arterial_delay_s"], s["non_arterial_delay_s"])
        )
    for (sc, st, rng), vals in sorted(g3.items()):
        am, asd = _mean_sd([v[0] for v in vals])
        nm, nsd = _mean_sd([v[1] for v in vals])
        rows3.append(
            f"{sc},{st},{int(rng)},{am:.3f},{nm:.3f},{asd:.3f},{nsd:.3f},{len(vals)}"
        )
    _write(out_dir, "fig3_arterial_split.csv", rows3)

    rows4 = ["scenario,strategy,sensing_range_ft,direction,n,percentile,travel_time_s"]
    rows4.extend(_travel_time_cdfs(exp, ordered))
    _write(out_dir, "fig4_travel_time_cdf.csv", rows4)

    rows5 = ["scenario,strategy,sensing_range_ft,intersection,phase,pog_mean,n_seeds"]
    g5: dict[tuple, list[float]] = {}
    for (sc, st, rng, _seed), s in ordered:
        for i in range(exp.geometry.n_intersections):
            for p in (2, 6):
                v = s.get(f"pog_i{i}_p{p}")
                if v is not None:
                    g5.setdefault((sc, st, rng, i, p), []).append(v)
    for (sc, st, rng, i, p), vals in sorted(g5.items()):
        m, _sd = _mean_sd(vals)
        rows5.append(f"{sc},{st},{int(rng)},{i},{p},{m:.4f},{len(vals)}")
    _write(out_dir, "fig5_pog.csv", rows5)
    _export_coordination_diagrams(exp, ordered)

    summary = {
        "cells_total": len(results) + len(failures),
        "cells_ok": len(results),
        "cells_failed": len(failures),
        "failures": {"/".join(map(str, k)): v for k, v in sorted(failures.items())},
        "results": [
            {k: v for k, v in s.items() if k != "resumed"} for _cell, s in ordered
        ],
    }
    with open(os.path.join(out_dir, "summary.json"), "w") as fh:
        json.dump(summary, fh, sort_keys=True, indent=1)
        fh.write("\n")
    return summary


def _travel_time_cdfs(exp: ExperimentConfig, ordered) -> list[str]:
    """Pooled travel-time percentiles per (scenario, strategy, range,
    direction) from the saved records."""
    pooled: dict[tuple, list[float]] = {}
    for (sc, st, rng, seed), s in ordered:
        rec = RunRecord.load(s["dir"])
        for d in ("EB", "WB"):
            samples = metrics.travel_time_cdf(rec, d, exp.geometry)
            pooled.setdefault((sc, st, rng, d), []).extend(samples)
    rows = []
    for (sc, st, rng, d), samples in sorted(pooled.items()):
        samples.sort()
        if not samples:
            continue
        for q in range(5, 100, 5):
            v = metrics.percentile(samples, q / 100.0)
            rows.append(f"{sc},{st},{int(rng)},{d},{len(samples)},{q},{v:.2f}")
    return rows


def _export_coordination_diagrams(exp: ExperimentConfig, ordered) -> None:
    """Paper-style diagrams: middle intersection, eastbound through, first
    seed of each (scenario, strategy, range)."""
    out_dir = os.path.join(exp.matrix.output_dir, "coordination_diagrams")
    os.makedirs(out_dir, exist_ok=True)
    mid = exp.geometry.n_intersections // 2
    seen = set()
    for (sc, st, rng, seed), s in ordered:
        key = (sc, st, rng)
        if key in seen:
            continue
        seen.add(key)
        rec = RunRecord.load(s["dir"])
        rows = metrics.coordination_diagram_export(rec, mid, 2)
        lines = ["cycle,kind,interval,start_in_cycle,end_in_cycle"]
        lines.extend(",".join(str(x) for x in r) for r in rows)
        name = f"{sc}_{st}_{int(rng)}_i{mid}_p2.csv"
        _write(out_dir, name, lines)


def _write(out_dir: str, name: str, lines: list[str]) -> None:
    with open(os.path.join(out_dir, name), "w") as fh:
        fh.write(f"#schema,corsim.{os.path.splitext(name)[0]},1\n")
        fh.write("\n".join(lines))
        fh.write("\n")
