"""Corridor network construction, demand streams, and route sampling.

The corridor is an east-west arterial through three signalized
intersections with a two-way cross street at each.  Every inbound approach
is a 3-lane link (left bay, inner through, outer through/right) ending at a
stop bar; links abut so arterial stop bars are exactly the intersection
spacing apart.  Vehicles leaving the network despawn at their final stop
bar; vehicles turning onto another street re-enter after a fixed virtual
box transit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import (
    Approach,
    CorridorGeometry,
    Movement,
    PHASE_OF,
    ScenarioConfig,
    Turn,
)

APPROACH_CODE = {Approach.EB: 0, Approach.WB: 1, Approach.NB: 2, Approach.SB: 3}
TURN_CODE = {Turn.THROUGH: 0, Turn.LEFT: 1, Turn.RIGHT: 2}
CODE_TURN = {v: k for k, v in TURN_CODE.items()}
CODE_APPROACH = {v: k for k, v in APPROACH_CODE.items()}

EXIT = -1


@dataclass(frozen=True)
class Link:
    """One directed approach: 3 lanes ending at a stop bar."""

    link_id: int
    name: str
    intersection: int
    approach: Approach
    length: float
    is_entry: bool


@dataclass
class Network:
    geometry: CorridorGeometry
    links: list[Link]
    #: (link_id, turn code) -> next link id or EXIT
    connections: dict[tuple[int, int], int]
    #: entry link per entry leg: (intersection, approach) -> link id
    entry_links: dict[tuple[int, Approach], int]

    @property
    def n_links(self) -> int:
        return len(self.links)

    @property
    def n_lanes(self) -> int:
        return 3 * len(self.links)

    def lane_id(self, link_id: int, lane: int) -> int:
        return link_id * 3 + lane

    def link_of_lane(self, lane_id: int) -> Link:
        return self.links[lane_id // 3]


def build_network(geom: CorridorGeometry) -> Network:
    links: list[Link] = []
    n = geom.n_intersections

    def add(name, intersection, approach, length, is_entry):
        links.append(Link(len(links), name, intersection, approach, length, is_entry))
        return links[-1].link_id

    eb = [
        add(f"EB{i}", i, Approach.EB,
            geom.approach_length if i == 0 else geom.internal_link_length(i - 1),
            i == 0)
        for i in range(n)
    ]
    wb = [
        add(f"WB{i}", i, Approach.WB,
            geom.approach_length if i == n - 1 else geom.internal_link_length(i),
            i == n - 1)
        for i in range(n)
    ]
    nb = [add(f"NB{i}", i, Approach.NB, geom.approach_length, True) for i in range(n)]
    sb = [add(f"SB{i}", i, Approach.SB, geom.approach_length, True) for i in range(n)]

    conn: dict[tuple[int, int], int] = {}
    for i in range(n):
        # eastbound: through continues east, left exits north, right exits south
        conn[(eb[i], 0)] = eb[i + 1] if i + 1 < n else EXIT
        conn[(eb[i], 1)] = EXIT
        conn[(eb[i], 2)] = EXIT
        # westbound: through continues west
        conn[(wb[i], 0)] = wb[i - 1] if i - 1 >= 0 else EXIT
        conn[(wb[i], 1)] = EXIT
        conn[(wb[i], 2)] = EXIT
        # northbound: left joins westbound, right joins eastbound
        conn[(nb[i], 0)] = EXIT
        conn[(nb[i], 1)] = wb[i - 1] if i - 1 >= 0 else EXIT
        conn[(nb[i], 2)] = eb[i + 1] if i + 1 < n else EXIT
        # southbound: left joins eastbound, right joins westbound
        conn[(sb[i], 0)] = EXIT
        conn[(sb[i], 1)] = eb[i + 1] if i + 1 < n else EXIT
        conn[(sb[i], 2)] = wb[i - 1] if i - 1 >= 0 else EXIT

    entries = {}
    for i in range(n):
        entries[(i, Approach.NB)] = nb[i]
        entries[(i, Approach.SB)] = sb[i]
    entries[(0, Approach.EB)] = eb[0]
    entries[(n - 1, Approach.WB)] = wb[n - 1]
    return Network(geometry=geom, links=links, connections=conn, entry_links=entries)


@dataclass(frozen=True)
class RouteStep:
    link_id: int
    turn: Turn


def sample_route(
    net: Network,
    scenario: ScenarioConfig,
    entry: Movement,
    rng: np.random.Generator,
) -> list[RouteStep]:
    """Route for a vehicle entering on ``entry``: the entry turn is fixed,
    later turns are drawn from per-intersection turn fractions."""
    link_id = net.entry_links[(entry.intersection, entry.approach)]
    steps = [RouteStep(link_id, entry.turn)]
    nxt = net.connections[(link_id, TURN_CODE[entry.turn])]
    while nxt != EXIT:
        link = net.links[nxt]
        fr = scenario.turn_fractions.get((link.intersection, link.approach))
        if fr is None:
            turn = Turn.THROUGH
        else:
            u = rng.random()
            acc = 0.0
            turn = Turn.THROUGH
            for t in (Turn.LEFT, Turn.THROUGH, Turn.RIGHT):
                acc += fr.get(t, 0.0)
                if u < acc:
                    turn = t
                    break
        steps.append(RouteStep(nxt, turn))
        nxt = net.connections[(nxt, TURN_CODE[turn])]
    return steps


class DemandStream:
    """Poisson arrivals for one entry movement, seeded independently so runs
    are reproducible regardless of execution order."""

    def __init__(self, movement: Movement, rate_vph: float, seed: int, stream_idx: int):
        self.movement = movement
        self.rate = rate_vph
        self.rng = np.random.default_rng(np.random.SeedSequence([seed, stream_idx]))
        self._next = self._draw_first()

    def _draw_first(self) -> float:
        if self.rate <= 0:
            return float("inf")
        return self.rng.exponential(3600.0 / self.rate)

    def peek(self) -> float:
        return self._next

    def pop(self) -> float:
        t = self._next
        if self.rate <= 0:
            return t
        self._next = t + self.rng.exponential(3600.0 / self.rate)
        return t


def build_demand(scenario: ScenarioConfig, seed: int) -> list[DemandStream]:
    streams = []
    for idx, mv in enumerate(scenario.entry_movements()):
        streams.append(DemandStream(mv, scenario.demand[mv], seed, idx))
    return streams


def propagate_volumes(net: Network, scenario: ScenarioConfig) -> dict[Movement, float]:
    """Expected hourly volume of every movement at every intersection under
    the routing rules, by linear flow propagation (exact for Poisson
    demand).  Used for Webster planning and demand calibration."""
    inflow: dict[int, float] = {l.link_id: 0.0 for l in net.links}
    entry_turn: dict[tuple[int, Turn], float] = {}
    for mv, rate in scenario.demand.items():
        link = net.entry_links[(mv.intersection, mv.approach)]
        inflow[link] += rate
        entry_turn[(link, mv.turn)] = entry_turn.get((link, mv.turn), 0.0) + rate

    volumes: dict[Movement, float] = {}
    # process links in topological order: entries first, then along arterial
    order = sorted(net.links, key=lambda l: (not l.is_entry,))
    pending = {l.link_id for l in net.links}
    added: dict[int, float] = {l.link_id: 0.0 for l in net.links}
    for mv, rate in scenario.demand.items():
        link = net.entry_links[(mv.intersection, mv.approach)]
        added[link] += rate

    def turn_split(link: Link, total: float, fixed: dict[Turn, float]) -> dict[Turn, float]:
        out = dict(fixed)
        rest = total - sum(fixed.values())
        if rest > 1e-12:
            fr = scenario.turn_fractions.get((link.intersection, link.approach),
                                             {Turn.THROUGH: 1.0})
            for t in (Turn.LEFT, Turn.THROUGH, Turn.RIGHT):
                out[t] = out.get(t, 0.0) + rest * fr.get(t, 0.0)
        return out

    # iterate until flows settle (the graph is a DAG, a few passes suffice)
    done: set[int] = set()
    guard = 0
    while pending and guard < 100:
        guard += 1
        progressed = False
        for link in net.links:
            lid = link.link_id
            if lid in done:
                continue
            upstream = [
                (src, tc) for (src, tc), dst in net.connections.items() if dst == lid
            ]
            if any(src not in done for src, _ in upstream):
                continue
            total = added[lid]
            fixed: dict[Turn, float] = {}
            if link.is_entry:
                for t in (Turn.LEFT, Turn.THROUGH, Turn.RIGHT):
                    if (lid, t) in entry_turn:
                        fixed[t] = entry_turn[(lid, t)]
                split = dict(fixed)
                extra = total - sum(fixed.values())
                if extra > 1e-12:
                    split = turn_split(link, total, fixed)
            else:
                split = turn_split(link, total, {})
            for t in (Turn.LEFT, Turn.THROUGH, Turn.RIGHT):
                vol = split.get(t, 0.0)
                volumes[Movement(link.intersection, link.approach, t)] = vol
                dst = net.connections[(lid, TURN_CODE[t])]
                if dst != EXIT:
                    added[dst] += vol
            done.add(lid)
            pending.discard(lid)
            progressed = True
        if not progressed:
            raise RuntimeError("flow propagation stalled; network not a DAG?")
    return volumes
