"""Deterministic fixed-tick simulation loop.

Each one-second tick runs six phases in a fixed, observable order:

1. the hazard front advances;
2. every decision node refreshes its queue statistics, arrival-rate
   window and mailbox expiry (effective lengths and hazard times come
   from the shared hazard field refreshed in phase 1);
3. nodes with demand (queued or approaching evacuees) emit smart
   packets per active metric class, acknowledgements applying
   immediately; the first tick instead fires a warm-up burst from every
   node;
4. each node serves the head of its queue: regroup checks, route
   assignment;
5. evacuees move (enqueueing on arrival, with the congestion check),
   then take fatigue/hazard damage, then queue waits accrue;
6. the clock advances.

Identical (config, seed) pairs produce bit-identical results; the run
double-checks its own bookkeeping (agent conservation, two congestion
accumulators) before returning.
"""
from __future__ import annotations

import random
from collections import deque
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .agents import (
    AgentClass,
    DnQueue,
    Evacuee,
    Group,
    Status,
    advance,
    base_group,
    regroup_congestion,
    regroup_health,
    serve_evacuee,
    update_health,
)
from .building import BuildingGraph, load_graph, shortest_exit_paths
from .config import MetricMode, ScenarioConfig
from .cpn import CpnRouter, EnvArrays, MetricClass, RouterParams
from .hazard import HazardField, HazardScenario


@dataclass
class SimClock:
    now: float = 0.0
    tick: float = 1.0


@dataclass
class DnState:
    """Mutable per-node simulation state (queue, arrival window)."""

    vid: int
    vidx: int
    fallback_path: tuple[int, ...]
    queue: DnQueue = field(default_factory=DnQueue)
    window: deque = field(default_factory=deque)


@dataclass(frozen=True)
class AgentRecord:
    agent_id: int
    agent_class: int
    final_group: str
    outcome: str  # exited | perished
    end_time: float
    queued_time: int
    path_requests: int
    group_switches: int


@dataclass(frozen=True)
class SimResult:
    occupancy: int
    seed: int
    mode: str
    radius: float
    survival_rate: float
    exited: int
    perished: int
    duration: float
    total_congestion_time: int
    sp_launched: int
    sp_delivered: int
    sp_dropped: int
    records: tuple[AgentRecord, ...]

    def to_dict(self) -> dict:
        return {
            "occupancy": self.occupancy,
            "seed": self.seed,
            "mode": self.mode,
            "radius": self.radius,
            "survival_rate": self.survival_rate,
            "exited": self.exited,
            "perished": self.perished,
            "duration": self.duration,
            "total_congestion_time": self.total_congestion_time,
            "sp_launched": self.sp_launched,
            "sp_delivered": self.sp_delivered,
            "sp_dropped": self.sp_dropped,
            "records": [vars(r) for r in self.records],
        }


_MODE_CLASSES = {
    MetricMode.SM: (MetricClass.SAFETY,),
    MetricMode.TM: (MetricClass.TIME,),
    MetricMode.CM: (MetricClass.TIME, MetricClass.SAFETY),
}


class Simulation:
    """One seeded run over one scenario."""

    def __init__(
        self,
        config: ScenarioConfig,
        seed: int,
        graph: Optional[BuildingGraph] = None,
        trace: Optional[list] = None,
    ):
        config.validate()
        self.config = config
        self.seed = seed
        self.trace = trace
        self.graph = graph if graph is not None else load_graph(config.graph_file)
        self.idx = self.graph.index()
        self.clock = SimClock(tick=config.tick)

        scenario = HazardScenario(
            origin=config.origin,
            start_time=config.start_time,
            spread_rate=config.spread_rate,
            intensity_ramp=config.intensity_ramp,
        )
        self.field = HazardField(self.graph, scenario, config.radius)
        nv = self.idx.n_vertices
        self.env = EnvArrays(
            eff_len=self.field.eff_len,
            t_haz=self.field.t_haz,
            growth=self.field.growth,
            queue_len=np.zeros(nv),
            arrival=np.zeros(nv),
        )
        params = RouterParams(
            exploration=config.exploration,
            threshold_smoothing=config.threshold_smoothing,
            learning_rate=config.learning_rate,
            mailbox_capacity=config.mailbox_capacity,
            entry_expiry=config.entry_expiry,
            hop_budget=config.hop_budget,
            age_budget=config.age_budget,
            band_ratio=config.band_ratio,
            ext_excitation=config.ext_excitation,
            ext_inhibition=config.ext_inhibition,
            damping=config.damping,
            solve_tol=config.solve_tol,
            solve_max_iter=config.solve_max_iter,
        )
        speeds = {
            MetricClass.TIME: config.class_one_speed,
            MetricClass.SAFETY: config.class_two_speed,
        }
        self.router = CpnRouter(self.graph, params, speeds, self.env, seed)
        self.sp_classes = _MODE_CLASSES[config.metric_mode]
        self.dynamic = (
            config.metric_mode == MetricMode.CM and config.dynamic_grouping
        )

        fallbacks = shortest_exit_paths(self.graph)
        window_ticks = max(1, round(config.arrival_window / config.tick))
        self.dns: dict[int, DnState] = {}
        for vid in self.idx.vids:
            if self.graph.is_exit(vid):
                continue
            self.dns[vid] = DnState(
                vid=vid,
                vidx=self.idx.vidx[vid],
                fallback_path=fallbacks[vid],
                window=deque(maxlen=window_ticks),
            )

        self.agents = self._place_agents()
        self.total_congestion_time = 0
        self._first_tick = True

    def _place_agents(self) -> list[Evacuee]:
        cfg = self.config
        rng = random.Random(self.seed)
        spots = [v for v in self.idx.vids if not self.graph.is_exit(v)]
        if cfg.occupancy > 0 and not spots:
            raise ValueError("no non-exit vertex to place evacuees on")
        agents = []
        for aid in range(cfg.occupancy):
            cls = (
                AgentClass.TWO
                if rng.random() < cfg.class_two_fraction
                else AgentClass.ONE
            )
            vertex = spots[rng.randrange(len(spots))]
            if cfg.metric_mode == MetricMode.SM:
                group = Group.SAFETY
            elif cfg.metric_mode == MetricMode.TM:
                group = Group.TIME
            else:
                group = Group.SAFETY if cls == AgentClass.TWO else Group.TIME
            agent = Evacuee(
                id=aid,
                agent_class=cls,
                group=group,
                base_speed=(
                    cfg.class_one_speed if cls == AgentClass.ONE else cfg.class_two_speed
                ),
                fatigue_rate=(
                    cfg.class_one_fatigue
                    if cls == AgentClass.ONE
                    else cfg.class_two_fatigue
                ),
                hazard_rate=(
                    cfg.class_one_hazard_damage
                    if cls == AgentClass.ONE
                    else cfg.class_two_hazard_damage
                ),
                status=Status.QUEUED,
                vertex=vertex,
            )
            agents.append(agent)
            # placement counts as reaching the vertex: crowded spots
            # divert late joiners like any other arrival
            if self.dynamic:
                regroup_congestion(agent, len(self.dns[vertex].queue), cfg.queue_threshold)
            self.dns[vertex].queue.push(aid)
        return agents

    # -- one tick ---------------------------------------------------------

    def step(self) -> None:
        cfg = self.config
        now_end = self.clock.now + self.clock.tick

        # (1) hazard
        self.field.refresh(now_end)

        # (2) node refresh
        for dn in self.dns.values():
            self.env.queue_len[dn.vidx] = len(dn.queue)
            self.env.arrival[dn.vidx] = sum(dn.window) / cfg.arrival_window
            self.router.mailboxes[dn.vid].prune(now_end)

        # (3) smart-packet emission
        if self._first_tick:
            demand = sorted(self.dns)
            per_node = cfg.warmup_burst
        else:
            wanted = {vid for vid, dn in self.dns.items() if len(dn.queue) > 0}
            for e in self.agents:
                if e.status == Status.MOVING:
                    # every vertex the evacuee will hit before its next
                    # route request counts as approached
                    stop = min(e.leg + 1 + e.depth_remaining, len(e.assigned_path))
                    for vid in e.assigned_path[e.leg + 1 : stop]:
                        if not self.graph.is_exit(vid):
                            wanted.add(vid)
            demand = sorted(wanted)
            per_node = cfg.sp_per_tick
        for vid in demand:
            for cls in self.sp_classes:
                for _ in range(per_node):
                    self.router.launch_sp(vid, cls, now_end)

        # (4) queue service: one evacuee per node per tick
        for vid in sorted(self.dns):
            dn = self.dns[vid]
            if len(dn.queue) == 0:
                continue
            e = self.agents[dn.queue.pop()]
            if self.dynamic:
                regroup_health(e, cfg.health_threshold)
            serve_evacuee(
                self.router.mailboxes[vid],
                dn.fallback_path,
                e,
                cfg.movement_depth,
                cfg.band_ratio,
            )
            if self.trace is not None:
                self.trace.append(
                    (now_end, "serve", vid, e.id, e.group.value, e.assigned_path)
                )

        # (5) movement, health, queue accrual
        arrivals: dict[int, int] = {}
        for e in self.agents:
            if e.status != Status.MOVING:
                continue
            for vertex, kind in advance(e, cfg.tick, self.graph):
                if kind == "exit":
                    e.end_time = now_end
                else:
                    arrivals[vertex] = arrivals.get(vertex, 0) + 1
                    if kind == "queue":
                        dn = self.dns[vertex]
                        if self.dynamic:
                            regroup_congestion(e, len(dn.queue), cfg.queue_threshold)
                        dn.queue.push(e.id)
                if self.trace is not None:
                    self.trace.append((now_end, "arrive", e.id, vertex, kind))
        for e in self.agents:
            if not e.alive:
                continue
            update_health(e, cfg.tick, self._exposure(e))
            if e.status == Status.PERISHED:
                e.end_time = now_end
                if e.vertex is not None and e.vertex in self.dns:
                    self.dns[e.vertex].queue.discard(e.id)
                if self.trace is not None:
                    self.trace.append((now_end, "perish", e.id))
            elif self.dynamic:
                regroup_health(e, cfg.health_threshold)
        for e in self.agents:
            if e.status == Status.QUEUED:
                e.queued_time += 1
                self.total_congestion_time += 1
        for vid, dn in self.dns.items():
            dn.window.append(arrivals.get(vid, 0))

        # (6) clock
        self.clock.now = now_end
        self._first_tick = False

    def _exposure(self, e: Evacuee) -> float:
        if e.status == Status.MOVING:
            tail = e.assigned_path[e.leg]
            head = e.assigned_path[e.leg + 1]
            eid = self.graph.edge_between(tail, head)
            edge = self.graph.edges[eid]
            t = e.progress / edge.length
            if tail != edge.endpoints[0]:
                t = 1.0 - t
            return self.field.edge_intensity(eid, t)
        return self.field.vertex_intensity(self.idx.vidx[e.vertex])

    # -- full run ---------------------------------------------------------

    def run(self) -> SimResult:
        cfg = self.config
        while self.clock.now < cfg.max_time and any(e.alive for e in self.agents):
            self.step()
        for e in self.agents:
            if e.alive:  # still inside at the deadline
                e.status = Status.PERISHED
                e.end_time = cfg.max_time
        records = tuple(
            AgentRecord(
                agent_id=e.id,
                agent_class=int(e.agent_class),
                final_group=e.group.value,
                outcome="exited" if e.status == Status.EXITED else "perished",
                end_time=float(e.end_time),
                queued_time=e.queued_time,
                path_requests=e.path_requests,
                group_switches=e.group_switches,
            )
            for e in self.agents
        )
        exited = sum(1 for r in records if r.outcome == "exited")
        perished = len(records) - exited
        if exited + perished != cfg.occupancy:
            raise RuntimeError("agent conservation violated")
        queued_total = sum(r.queued_time for r in records)
        if queued_total != self.total_congestion_time:
            raise RuntimeError("congestion accumulators disagree")
        return SimResult(
            occupancy=cfg.occupancy,
            seed=self.seed,
            mode=cfg.metric_mode.value,
            radius=cfg.radius,
            survival_rate=(exited / cfg.occupancy) if cfg.occupancy else 1.0,
            exited=exited,
            perished=perished,
            duration=self.clock.now,
            total_congestion_time=self.total_congestion_time,
            sp_launched=self.router.stats.launched,
            sp_delivered=self.router.stats.delivered,
            sp_dropped=self.router.stats.dropped,
            records=records,
        )


def run(
    config: ScenarioConfig,
    seed: int,
    graph: Optional[BuildingGraph] = None,
) -> SimResult:
    """Run one replication; deterministic in (config, seed)."""
    return Simulation(config, seed, graph=graph).run()
