"""Brute-force cross-checks for the phase-allocation planner.

Everything here re-derives results from first principles - explicit stage
partition enumeration and a freshly written queue trace - so it shares no
logic with the planner it audits.  Used by the test suite and the
``corsim oracle`` subcommand.
"""

from __future__ import annotations

import numpy as np

from .paa import (
    DpProblem,
    GROUP_RINGS,
    PhaseTiming,
    backward_retrieve,
    forward_recursion,
)

INF = float("inf")


def queue_trace(arrivals, q0: int, green_start: int, green_end: int, h: int) -> list[int]:
    """Per-second queue lengths under the planner's service law, written
    independently: one departure per h-th busy green second."""
    q = q0
    busy = 0
    out = []
    for n, a in enumerate(arrivals):
        q += a
        if green_start <= n < green_end and q > 0:
            busy += 1
            if busy % h == 0:
                q -= 1
        out.append(q)
    return out


def _stage_delay(problem: DpProblem, group: str, start: int, x: int, queues: dict[int, int]):
    """Minimum stage delay over the full cross product of ring orders and
    splits, with exact queue threading; returns (delay, queues_out).

    Ties break like the planner's lower level: through phase leading, then
    the smaller split, ring by ring."""
    arr = problem.arrivals
    h = problem.h_sat
    window = range(start, start + x)

    def phase_delay(p: int, green_lo: int, green_hi: int, q0: int):
        a = [int(arr[p - 1, n]) if n < problem.horizon else 0 for n in window]
        trace = queue_trace(a, q0, green_lo, green_hi, h)
        return sum(trace), trace[-1] if trace else q0

    best = None
    rings = GROUP_RINGS[group]
    cand_per_ring = []
    for left, through in rings:
        tl, tt = problem.timings[left], problem.timings[through]
        cands = []
        for order_idx, (pf, ps) in enumerate(((through, left), (left, through))):
            tf, ts = problem.timings[pf], problem.timings[ps]
            for d in range(tf.g_min + tf.clearance, tf.g_max + tf.clearance + 1):
                g2 = x - d - ts.clearance
                if g2 < ts.g_min or g2 > ts.g_max:
                    continue
                ok = True
                for w in problem.priority_windows:
                    if w.phase not in (pf, ps):
                        continue
                    lo = max(w.start - start, 0)
                    hi = min(w.end - start, x)
                    if lo >= hi:
                        continue
                    green = (0, d - tf.clearance) if w.phase == pf else (d, x - ts.clearance)
                    if not (green[0] <= lo and hi <= green[1]):
                        ok = False
                if not ok:
                    continue
                df, qf = phase_delay(pf, 0, d - tf.clearance, queues.get(pf, 0))
                ds, qs = phase_delay(ps, d, x - ts.clearance, queues.get(ps, 0))
                cands.append((df + ds, order_idx, d, {pf: qf, ps: qs}))
        if not cands:
            return None
        cands.sort(key=lambda c: (c[0], c[1], c[2]))
        cand_per_ring.append(cands)

    # full cross product across rings guards the per-ring independence the
    # planner exploits
    best = None
    for c1 in cand_per_ring[0]:
        for c2 in cand_per_ring[1]:
            tot = c1[0] + c2[0]
            key = (tot, c1[1], c1[2], c2[1], c2[2])
            if best is None or key < best[0]:
                best = (key, c1, c2)
    _key, c1, c2 = best
    delay = c1[0] + c2[0]
    q_out = dict(queues)
    q_out.update(c1[3])
    q_out.update(c2[3])

    other = "B" if group == "A" else "A"
    for left, through in GROUP_RINGS[other]:
        for p in (left, through):
            for w in problem.priority_windows:
                if w.phase == p and w.start < start + x and w.end > start:
                    return None  # red over a priority window: infeasible
            a = [int(arr[p - 1, n]) if n < problem.horizon else 0 for n in window]
            trace = queue_trace(a, queues.get(p, 0), x + 1, x + 1, h)  # never green
            delay += sum(trace)
            q_out[p] = trace[-1] if trace else queues.get(p, 0)
    return delay, q_out


def exhaustive_plan_delay(problem: DpProblem, max_stages: int) -> int | None:
    """Optimal total delay over all alternating stage partitions of the
    horizon with at most ``max_stages`` stages; None if none is feasible."""
    T = problem.horizon
    best: list[float] = [INF]

    def recurse(start: int, stage_idx: int, acc: int, queues: dict[int, int]):
        if acc >= best[0]:
            return
        if start == T:
            best[0] = min(best[0], acc)
            return
        if stage_idx > max_stages:
            return
        group = problem.group_of_stage(stage_idx)
        b = problem.bounds(group)
        for x in range(b.x_min, min(b.x_max, T - start) + 1):
            res = _stage_delay(problem, group, start, x, queues)
            if res is None:
                continue
            delay, q_out = res
            recurse(start + x, stage_idx + 1, acc + delay, q_out)

    q0 = {p: int(problem.initial_queues[p - 1]) for p in range(1, 9)}
    recurse(0, 1, 0, q0)
    return None if best[0] == INF else int(best[0])


def random_problem(rng: np.random.Generator, t_max: int = 40, max_vehicles: int = 8) -> DpProblem:
    """Small sparse instance.  The horizon is drawn as the sum of a random
    feasible stage partition, so at least one strict-alternation plan always
    exists within the stage cap."""
    while True:
        g_min = int(rng.integers(2, 4))
        g_max = int(rng.integers(g_min + 2, g_min + 8))
        clearance = int(rng.integers(1, 3))
        x_min = 2 * (g_min + clearance)
        x_max = 2 * (g_max + clearance)
        n_stages = int(rng.integers(2, 5))
        if n_stages * x_min <= t_max:
            break
    lengths = [
        int(rng.integers(x_min, min(x_max, t_max // n_stages) + 1))
        for _ in range(n_stages)
    ]
    T = sum(lengths)
    timings = {
        p: PhaseTiming(g_min=g_min, g_max=g_max, clearance=clearance)
        for p in range(1, 9)
    }
    arr = np.zeros((8, T), dtype=np.int64)
    for _ in range(int(rng.integers(2, max_vehicles + 1))):
        arr[rng.integers(0, 8), rng.integers(0, T)] += 1
    q0 = np.zeros(8, dtype=np.int64)
    for _ in range(int(rng.integers(0, 3))):
        q0[rng.integers(0, 8)] += 1
    return DpProblem(
        horizon=T,
        start_group="A" if rng.random() < 0.5 else "B",
        timings=timings,
        arrivals=arr,
        initial_queues=q0,
        h_sat=2,
        stage_cap=max(n_stages + 1, int(rng.integers(4, 6))),
    )


def run_oracle_suite(instances: int = 50, seed: int = 20240901, t_max: int = 40):
    """DP vs enumeration on random small instances; returns (ok, report)."""
    rng = np.random.default_rng(seed)
    mismatches = []
    import time

    t0 = time.time()
    for k in range(instances):
        problem = random_problem(rng, t_max)
        table = forward_recursion(problem)
        plan = backward_retrieve(table)
        opt = exhaustive_plan_delay(problem, max_stages=table.j_last)
        if opt is None or plan.total_delay != opt:
            mismatches.append((k, plan.total_delay, opt))
    wall = time.time() - t0
    ok = not mismatches
    lines = [
        f"planner-vs-enumeration: {instances - len(mismatches)}/{instances} exact "
        f"({wall:.1f}s)"
    ]
    for k, got, want in mismatches[:10]:
        lines.append(f"  instance {k}: planner {got}, enumeration {want}")
    return ok, "\n".join(lines)
