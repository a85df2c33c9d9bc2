"""Deterministic fixed-step corridor microsimulation.

Vehicles follow a safe-speed rule against the leader's updated position
(8 ft standstill gap plus a speed-proportional term), stop at the bar via a
virtual leader when crossing is not permitted, and discharge from standing
queues on a per-lane service gate: after green onset plus startup lost time,
one queued vehicle crosses per saturation headway.  Right turners slow to
15 mph near the bar; permitted lefts accept gaps against the opposing
through.  Stop-bar occupancy ends at the crossing instant.

The step order within one tick is: supervisor commands from the prior
state, controller steps (producing signal events), vehicle kernel using the
new signal state, then crossing bookkeeping, transit insertions and spawns.
Detector outputs feed the controllers on the following tick.  Identical
configuration and seed reproduce the event log byte for byte.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .controller import (
    ALL_RED,
    EMPTY_COMMAND,
    GREEN,
    RED,
    RingBarrierController,
    YELLOW,
)
from .core import (
    ALL_PHASES,
    Approach,
    CorridorGeometry,
    Movement,
    PHASE_LANES,
    PHASE_OF,
    OPPOSING_THROUGH_OF_LEFT,
    PhaseConfig,
    ScenarioConfig,
    SensingRange,
    SimulationDefaults,
    Turn,
    default_phase_configs,
)
from .network import (
    APPROACH_CODE,
    CODE_TURN,
    EXIT,
    Network,
    RouteStep,
    TURN_CODE,
    build_demand,
    build_network,
    sample_route,
)
from .record import RunRecord
from .sensing import SensedVehicle

VEH_CAPACITY = 32768
LANE_CAPACITY = 128
ROUTE_MAX = 5
CROSS_BUF = 96
TURN_ENTRY_SPEED = 25.0


@dataclass
class SimConfig:
    scenario: ScenarioConfig
    strategy: str                      # FA | CA | SOA | PAA
    sensing_range: float
    seed: int
    geometry: CorridorGeometry = field(default_factory=CorridorGeometry)
    phase_configs: dict[int, PhaseConfig] = field(default_factory=default_phase_configs)
    defaults: SimulationDefaults = field(default_factory=SimulationDefaults)
    extras: dict = field(default_factory=dict)   # strategy-specific wiring


class Simulation:
    """One seeded, deterministic run of the corridor."""

    def __init__(self, cfg: SimConfig, supervisors=None):
        self.cfg = cfg
        self.net = build_network(cfg.geometry)
        self.dt = cfg.defaults.dt
        self.per_s = int(round(1.0 / self.dt))
        self.n_int = cfg.geometry.n_intersections
        d = cfg.defaults

        nl = self.net.n_lanes
        self.pos = np.zeros(VEH_CAPACITY)
        self.speed = np.zeros(VEH_CAPACITY)
        self.turn_code = np.zeros(VEH_CAPACITY, dtype=np.int32)
        self.committed = np.zeros(VEH_CAPACITY, dtype=np.uint8)
        self.stopped_flag = np.zeros(VEH_CAPACITY, dtype=np.uint8)
        self.ever_fast = np.zeros(VEH_CAPACITY, dtype=np.uint8)
        self.seg_stopped = np.zeros(VEH_CAPACITY, dtype=np.int32)
        self.seg_stops = np.zeros(VEH_CAPACITY, dtype=np.int32)
        self.route_links = np.full((VEH_CAPACITY, ROUTE_MAX), -1, dtype=np.int32)
        self.route_turns = np.zeros((VEH_CAPACITY, ROUTE_MAX), dtype=np.int32)
        self.route_pos = np.zeros(VEH_CAPACITY, dtype=np.int32)
        self.route_len = np.zeros(VEH_CAPACITY, dtype=np.int32)
        self.ff_time = np.zeros(VEH_CAPACITY)
        self.sched_time = np.zeros(VEH_CAPACITY)

        self.members = np.full((nl, LANE_CAPACITY), -1, dtype=np.int32)
        self.count = np.zeros(nl, dtype=np.int32)
        self.link_len = np.zeros(nl)
        self.lane_int = np.zeros(nl, dtype=np.int32)
        self.lane_phase = np.zeros(nl, dtype=np.int32)
        self.lane_is_left = np.zeros(nl, dtype=np.uint8)
        self.opp_phase = np.zeros(nl, dtype=np.int32)
        self.opp_lanes = np.full((nl, 2), -1, dtype=np.int32)
        self.adv_lane = np.zeros(nl, dtype=np.uint8)
        self.gate_free = np.full(nl, -1.0e9)
        self.last_cross = np.full(nl, -1.0e9)
        self.lane_approach = np.zeros(nl, dtype=np.int32)
        self._setup_lanes()

        self.green = np.zeros((self.n_int, 9), dtype=np.uint8)
        self.det_sb = np.zeros((self.n_int, 9), dtype=np.uint8)
        self.det_adv = np.zeros((self.n_int, 9), dtype=np.uint8)
        self.cross_buf = np.zeros((CROSS_BUF, 5), dtype=np.int32)

        command_driven = cfg.strategy == "PAA"
        start = (0, 0) if command_driven else (2, 6)
        self.controllers = [
            RingBarrierController(
                cfg.phase_configs,
                dt=self.dt,
                start_phases=start,
                command_driven=command_driven,
            )
            for _ in range(self.n_int)
        ]

        self.streams = build_demand(cfg.scenario, cfg.seed)
        self.pending: list[list] = [[] for _ in self.streams]

        self.record = RunRecord(
            meta={
                "scenario": cfg.scenario.name,
                "strategy": cfg.strategy,
                "sensing_range_ft": cfg.sensing_range,
                "seed": cfg.seed,
                "warmup_s": cfg.scenario.warmup,
                "duration_s": cfg.scenario.duration,
                "dt": self.dt,
            }
        )
        self.tick = 0
        self.next_slot = 0
        self.entered = 0
        self.exited = 0
        self.transits: dict[int, list[tuple[int, int, int]]] = {}
        self.blocked_transits: list[tuple[int, int, int]] = []
        self.supervisors = supervisors or []
        self._k = d  # param shortcut
        self._params = dict(
            v_ff=cfg.geometry.free_flow_speed,
            v_right=d.right_turn_speed,
            right_zone=d.right_turn_slow_zone,
            veh_len=16.0,
            min_gap=d.min_standstill_gap,
            k_follow=d.following_time_gap / self.dt,
            h_sat=d.saturation_headway,
            move_headway=0.6,
            perm_eta=d.permissive_left_gap,
            perm_clear=2.0,
            stopbar_len=cfg.geometry.stopbar_detector_length,
            adv_offset=cfg.geometry.advance_detector_offset,
            adv_len=6.0,
            eta_floor=5.0,
        )
        # downstream-first processing so through transfers move once per tick
        order = []
        eb = [l.link_id for l in self.net.links if l.approach == Approach.EB]
        wb = [l.link_id for l in self.net.links if l.approach == Approach.WB]
        rest = [
            l.link_id
            for l in self.net.links
            if l.approach in (Approach.NB, Approach.SB)
        ]
        for lid in list(reversed(eb)) + wb + rest:
            order.extend([lid * 3, lid * 3 + 1, lid * 3 + 2])
        self.lane_order = np.array(order, dtype=np.int32)
        self._phase_lanes: dict[tuple[int, int], list[int]] = {}
        for gl in range(self.net.n_lanes):
            key = (int(self.lane_int[gl]), int(self.lane_phase[gl]))
            self._phase_lanes.setdefault(key, []).append(gl)
        for ctrl in self.controllers:
            for ev in ctrl.events:
                self._log_signal(ev, 0)
        self._refresh_green()

    # -- construction helpers -----------------------------------------------

    def _setup_lanes(self) -> None:
        geom = self.cfg.geometry
        for link in self.net.links:
            base = link.link_id * 3
            i = link.intersection
            thr_phase = PHASE_OF[(link.approach, Turn.THROUGH)]
            left_phase = PHASE_OF[(link.approach, Turn.LEFT)]
            for lane in range(3):
                lid = base + lane
                self.link_len[lid] = link.length
                self.lane_int[lid] = i
                self.lane_approach[lid] = APPROACH_CODE[link.approach]
                if lane == 0:
                    self.lane_phase[lid] = left_phase
                    self.lane_is_left[lid] = 1
                    self.opp_phase[lid] = OPPOSING_THROUGH_OF_LEFT[left_phase]
                else:
                    self.lane_phase[lid] = thr_phase
                    if link.approach in (Approach.EB, Approach.WB):
                        self.adv_lane[lid] = 1
        # opposing through lanes for permitted lefts
        opposite = {
            Approach.EB: Approach.WB,
            Approach.WB: Approach.EB,
            Approach.NB: Approach.SB,
            Approach.SB: Approach.NB,
        }
        by_key = {(l.intersection, l.approach): l.link_id for l in self.net.links}
        for link in self.net.links:
            opp = by_key.get((link.intersection, opposite[link.approach]))
            if opp is not None:
                lid = link.link_id * 3
                self.opp_lanes[lid, 0] = opp * 3 + 1
                self.opp_lanes[lid, 1] = opp * 3 + 2

    def intersection_links(self, i: int) -> list[int]:
        return [l.link_id for l in self.net.links if l.intersection == i]

    # -- sensing -------------------------------------------------------------

    def sense(self, intersection: int, sensing_range: float) -> list[SensedVehicle]:
        """Range-filtered trajectory snapshot for one intersection."""
        out = []
        t = self.tick * self.dt
        for lid in self.intersection_links(intersection):
            link = self.net.links[lid]
            for lane in range(3):
                gl = lid * 3 + lane
                L = self.link_len[gl]
                for m in range(self.count[gl]):
                    v = int(self.members[gl, m])
                    dist = L - self.pos[v]
                    if dist < 0 or dist > sensing_range:
                        continue
                    out.append(
                        SensedVehicle(
                            vehicle_id=v,
                            movement=Movement(
                                intersection, link.approach, CODE_TURN[int(self.turn_code[v])]
                            ),
                            distance_to_stopbar=float(dist),
                            speed=float(self.speed[v]),
                            timestamp=t,
                        )
                    )
        return out

    # -- stepping ------------------------------------------------------------

    def _refresh_green(self) -> None:
        for i, ctrl in enumerate(self.controllers):
            row = self.green[i]
            row[:] = 0
            for p, interval in ctrl.active_phases:
                if interval == GREEN:
                    row[p] = 1

    def _log_signal(self, ev: tuple[int, int, str], i: int) -> None:
        tick, phase, interval = ev
        self.record.signal_events.append((tick * self.dt, i, phase, interval))

    def step(self) -> None:
        self.tick += 1
        t = self.tick * self.dt
        d = self.cfg.defaults

        commands = [EMPTY_COMMAND] * self.n_int
        for sup in self.supervisors:
            for i in range(self.n_int):
                cmd = sup.commands(self, i)
                if cmd is not None:
                    commands[i] = cmd

        for i, ctrl in enumerate(self.controllers):
            events = ctrl.step(self.det_sb[i], self.det_adv[i], commands[i])
            for ev in events:
                self._log_signal(ev, i)
            ctrl.check_safety()
            if events:
                self._handle_signal_events(i, events, t)
        self._refresh_green()

        p = self._params
        n_cross = _kernels.vehicle_step_kernel(
            t,
            self.dt,
            self.pos,
            self.speed,
            self.turn_code,
            self.committed,
            self.stopped_flag,
            self.ever_fast,
            self.seg_stopped,
            self.seg_stops,
            self.route_links,
            self.route_turns,
            self.route_pos,
            self.route_len,
            self.lane_order,
            self.members,
            self.count,
            self.link_len,
            self.lane_int,
            self.lane_phase,
            self.lane_is_left,
            self.opp_phase,
            self.opp_lanes,
            self.adv_lane,
            self.gate_free,
            self.last_cross,
            self.green,
            p["v_ff"],
            p["v_right"],
            p["right_zone"],
            p["veh_len"],
            p["min_gap"],
            p["k_follow"],
            p["h_sat"],
            p["move_headway"],
            p["perm_eta"],
            p["perm_clear"],
            p["stopbar_len"],
            p["adv_offset"],
            p["adv_len"],
            p["eta_floor"],
            self.det_sb,
            self.det_adv,
            self.cross_buf,
        )
        if n_cross:
            self._process_crossings(n_cross, t)
        self._insert_transits(t)
        self._spawn(t)

    def _handle_signal_events(self, i: int, events, t: float) -> None:
        d = self.cfg.defaults
        for tick, phase, interval in events:
            lanes = self._phase_lanes.get((i, phase), ())
            if interval == GREEN:
                for gl in lanes:
                    if self.count[gl] > 0:
                        head = int(self.members[gl, 0])
                        if self.speed[head] < 5.0:
                            boost = t + d.startup_lost_time + d.saturation_headway
                            if boost > self.gate_free[gl]:
                                self.gate_free[gl] = boost
            elif interval == YELLOW:
                b = d.comfortable_decel
                for gl in lanes:
                    L = self.link_len[gl]
                    for m in range(self.count[gl]):
                        v = int(self.members[gl, m])
                        sp = self.speed[v]
                        if sp > 15.0 and (L - self.pos[v]) <= sp * sp / (2.0 * b):
                            self.committed[v] = 1
            elif interval in (RED, ALL_RED):
                for gl in lanes:
                    for m in range(self.count[gl]):
                        self.committed[int(self.members[gl, m])] = 0

    def _process_crossings(self, n: int, t: float) -> None:
        for row in range(n):
            v, gl, segstop, segstops, transferred = (int(x) for x in self.cross_buf[row])
            link = self.net.link_of_lane(gl)
            for sup in self.supervisors:
                sup.on_crossing(self, link.intersection, int(self.lane_phase[gl]))
            if transferred:
                turn = Turn.THROUGH
            else:
                turn = CODE_TURN[int(self.turn_code[v])]
            self.record.log_vehicle(
                v, t, "cross", link.intersection, link.approach.value, turn.value,
                seg_stopped=segstop * self.dt, seg_stops=segstops,
            )
            if transferred:
                continue
            rp = int(self.route_pos[v])
            if rp + 1 < int(self.route_len[v]):
                due = self.tick + self.cfg.defaults.ticks(self.cfg.defaults.box_transit_time)
                nxt_link = int(self.route_links[v, rp + 1])
                nxt_turn = int(self.route_turns[v, rp + 1])
                self.transits.setdefault(due, []).append((v, nxt_link, nxt_turn))
                self.route_pos[v] = rp + 1
            else:
                self.exited += 1
                self.record.log_vehicle(
                    v, t, "exit", link.intersection, link.approach.value, turn.value,
                    sched_t=self.sched_time[v], ff_time=self.ff_time[v],
                )

    def _insert_transits(self, t: float) -> None:
        due = self.transits.pop(self.tick, [])
        if self.blocked_transits:
            due = self.blocked_transits + due
            self.blocked_transits = []
        for v, link_id, turn in due:
            lane = self._pick_lane(link_id, turn)
            if lane is None:
                self.blocked_transits.append((v, link_id, turn))
                continue
            self._place(v, lane, speed=TURN_ENTRY_SPEED)

    def _pick_lane(self, link_id: int, turn: int) -> int | None:
        base = link_id * 3
        if turn == 1:
            lane = base
        elif turn == 2:
            lane = base + 2
        else:
            lane = base + 1 if self.count[base + 1] <= self.count[base + 2] else base + 2
        c = int(self.count[lane])
        if c >= LANE_CAPACITY:
            return None
        if c > 0 and self.pos[int(self.members[lane, c - 1])] < 24.0:
            return None
        return lane

    def _place(self, v: int, lane: int, speed: float) -> None:
        c = int(self.count[lane])
        if c > 0:
            tail = int(self.members[lane, c - 1])
            gap_speed = (self.pos[tail] - 24.0) / self.cfg.defaults.following_time_gap
            speed = min(speed, max(0.0, gap_speed))
        self.members[lane, c] = v
        self.count[lane] = c + 1
        self.pos[v] = 0.0
        self.speed[v] = speed
        self.turn_code[v] = self.route_turns[v, self.route_pos[v]]
        self.committed[v] = 0
        self.stopped_flag[v] = 0
        self.ever_fast[v] = 1 if speed > 15.0 else 0
        self.seg_stopped[v] = 0
        self.seg_stops[v] = 0

    def _spawn(self, t: float) -> None:
        for idx, stream in enumerate(self.streams):
            while stream.peek() <= t:
                sched = stream.pop()
                route = sample_route(self.net, self.cfg.scenario, stream.movement, stream.rng)
                self.pending[idx].append((sched, route))
            if not self.pending[idx]:
                continue
            sched, route = self.pending[idx][0]
            lane = self._pick_lane(route[0].link_id, TURN_CODE[route[0].turn])
            if lane is None:
                continue
            v = self.next_slot
            if v >= VEH_CAPACITY:
                raise RuntimeError("vehicle capacity exhausted")
            self.next_slot += 1
            self.pending[idx].pop(0)
            n = len(route)
            for k, step in enumerate(route):
                self.route_links[v, k] = step.link_id
                self.route_turns[v, k] = TURN_CODE[step.turn]
            self.route_len[v] = n
            self.route_pos[v] = 0
            dist = sum(self.net.links[s.link_id].length for s in route)
            self.ff_time[v] = dist / self.cfg.geometry.free_flow_speed + (
                (n - 1) * self.cfg.defaults.box_transit_time
            )
            self.sched_time[v] = sched
            self._place(v, lane, speed=self.cfg.geometry.free_flow_speed)
            self.entered += 1
            mv = stream.movement
            self.record.log_vehicle(
                v, t, "enter", mv.intersection, mv.approach.value, mv.turn.value,
                sched_t=sched, ff_time=self.ff_time[v],
            )

    # -- top level ------------------------------------------------------------

    def run(self) -> RunRecord:
        total_ticks = self.cfg.defaults.ticks(
            self.cfg.scenario.warmup + self.cfg.scenario.duration
        )
        for sup in self.supervisors:
            sup.begin(self)
        while self.tick < total_ticks:
            self.step()
        active = int(self.count.sum()) + sum(len(v) for v in self.transits.values()) + len(
            self.blocked_transits
        )
        pending = sum(len(q) for q in self.pending)
        self.record.meta.update(
            entered=self.entered,
            exited=self.exited,
            on_network=active,
            pending_at_edge=pending,
            end_time_s=total_ticks * self.dt,
        )
        for sup in self.supervisors:
            sup.finish(self)
        return self.record
