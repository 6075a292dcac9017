"""Evacuee agents: health and mobility dynamics, queueing, path-following.

Evacuees come in two classes (able-bodied fast movers and slower, more
vulnerable ones), start at full health and lose it to fatigue and hazard
exposure; dropping below half health halves their speed, reaching zero
is fatal. They follow assigned routes for a fixed number of vertices
(the movement depth) before queueing at a decision node for a fresh
route, and can be regrouped on the way: demoted to safety routing when
badly hurt, or diverted onto a less congested route when they arrive at
a crowded node.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from typing import Optional

from .building import BuildingGraph
from .cpn import Mailbox, MetricClass, best_path, congestion_ease_path


class AgentClass(IntEnum):
    ONE = 1  # prime-aged: faster, tougher
    TWO = 2  # children/elderly: slower, more vulnerable


class Group(str, Enum):
    TIME = "time"
    SAFETY = "safety"
    CONGESTION_EASE = "congestion_ease"


class Status(str, Enum):
    MOVING = "moving"
    QUEUED = "queued"
    EXITED = "exited"
    PERISHED = "perished"


FULL_HEALTH = 100.0
SPEED_HALVING_HEALTH = 50.0


@dataclass
class Evacuee:
    id: int
    agent_class: AgentClass
    group: Group
    base_speed: float
    fatigue_rate: float
    hazard_rate: float = 1.0  # health/s per sensed intensity level
    health: float = FULL_HEALTH
    current_speed: float = 0.0
    status: Status = Status.QUEUED
    vertex: Optional[int] = None  # occupied vertex when not mid-edge
    assigned_path: Optional[tuple[int, ...]] = None
    leg: int = 0  # index of the path edge being traversed
    progress: float = 0.0  # cm from the current leg's tail
    depth_remaining: int = 0
    demoted: bool = False  # health-triggered switch to safety routing
    path_requests: int = 0
    queued_time: int = 0
    group_switches: int = 0
    end_time: Optional[float] = None

    def __post_init__(self):
        if self.current_speed == 0.0:
            self.current_speed = self.base_speed

    @property
    def alive(self) -> bool:
        return self.status in (Status.MOVING, Status.QUEUED)

    def position(self):
        """(vertex,) when at a node, (tail, head, progress) mid-edge."""
        if self.status == Status.MOVING:
            return (
                self.assigned_path[self.leg],
                self.assigned_path[self.leg + 1],
                self.progress,
            )
        return (self.vertex,)


@dataclass
class DnQueue:
    """FIFO queue of evacuees waiting for service at a decision node."""

    waiting: deque[int] = field(default_factory=deque)

    def __len__(self) -> int:
        return len(self.waiting)

    def push(self, agent_id: int) -> None:
        self.waiting.append(agent_id)

    def pop(self) -> int:
        return self.waiting.popleft()

    def discard(self, agent_id: int) -> None:
        try:
            self.waiting.remove(agent_id)
        except ValueError:
            pass


def base_group(e: Evacuee) -> Group:
    """The group an evacuee routes by when not congestion-diverted."""
    if e.agent_class == AgentClass.TWO or e.demoted:
        return Group.SAFETY
    return Group.TIME


def update_health(e: Evacuee, dt: float, local_intensity: float) -> Evacuee:
    """Apply fatigue and hazard damage over ``dt`` seconds.

    ``local_intensity`` is the sensed intensity at the evacuee's
    position (1 when clear, level*10^3 when burning); damage scales with
    the level and the evacuee's class-dependent vulnerability. Below
    half health the speed halves; at zero the evacuee perishes.
    """
    if dt <= 0:
        raise ValueError("dt must be > 0")
    level = local_intensity / 1000.0 if local_intensity > 1.0 else 0.0
    e.health = max(0.0, e.health - dt * (e.fatigue_rate + e.hazard_rate * level))
    e.current_speed = (
        e.base_speed / 2 if e.health < SPEED_HALVING_HEALTH else e.base_speed
    )
    if e.health == 0.0 and e.alive:
        e.status = Status.PERISHED
    return e


def regroup_health(e: Evacuee, threshold: float = SPEED_HALVING_HEALTH) -> Evacuee:
    """Demote a badly hurt class-one evacuee to safety routing (one-way)."""
    if e.agent_class == AgentClass.ONE and not e.demoted and e.health < threshold:
        e.demoted = True
        e.group_switches += 1
        if e.group == Group.TIME:
            e.group = Group.SAFETY
    return e


def regroup_congestion(e: Evacuee, queue_len: int, threshold: int = 4) -> Evacuee:
    """Divert an arrival at a crowded node for its next route request."""
    if queue_len >= threshold and e.group != Group.CONGESTION_EASE:
        e.group = Group.CONGESTION_EASE
        e.group_switches += 1
    return e


def serve_evacuee(
    mailbox: Mailbox,
    fallback_path: tuple[int, ...],
    e: Evacuee,
    depth: int,
    band_ratio: float,
) -> Evacuee:
    """Assign the evacuee its next route and release it from the queue.

    Route choice follows the group: best time route, best safety route,
    or (congestion-diverted) the least congested acceptable route of the
    base metric. With an empty mailbox the precomputed physically
    shortest route serves as fallback.
    """
    if e.group == Group.CONGESTION_EASE:
        cls = (
            MetricClass.SAFETY
            if base_group(e) == Group.SAFETY
            else MetricClass.TIME
        )
        entry = congestion_ease_path(mailbox, cls, band_ratio)
        e.group = base_group(e)  # diversion lasts one request
    else:
        cls = MetricClass.TIME if e.group == Group.TIME else MetricClass.SAFETY
        entry = best_path(mailbox, cls)
    e.assigned_path = entry.path if entry is not None else fallback_path
    e.leg = 0
    e.progress = 0.0
    e.depth_remaining = depth
    e.path_requests += 1
    e.status = Status.MOVING
    e.vertex = None
    return e


def advance(e: Evacuee, dt: float, graph: BuildingGraph) -> list[tuple[int, str]]:
    """Move along the assigned route for ``dt`` seconds.

    Returns the vertices reached this step, each tagged ``exit``,
    ``queue`` (movement depth spent or route exhausted: wait for a fresh
    route) or ``pass`` (carry on through). Movement left over after
    reaching a vertex continues onto the next leg within the same step.
    """
    if e.status != Status.MOVING:
        raise ValueError("only moving evacuees advance")
    events: list[tuple[int, str]] = []
    budget = e.current_speed * dt
    while budget > 0.0:
        tail = e.assigned_path[e.leg]
        head = e.assigned_path[e.leg + 1]
        length = graph.edges[graph.edge_between(tail, head)].length
        remaining = length - e.progress
        if budget < remaining:
            e.progress += budget
            break
        budget -= remaining
        e.leg += 1
        e.progress = 0.0
        if graph.is_exit(head):
            e.status = Status.EXITED
            e.vertex = head
            events.append((head, "exit"))
            break
        e.depth_remaining -= 1
        if e.depth_remaining <= 0 or e.leg >= len(e.assigned_path) - 1:
            e.status = Status.QUEUED
            e.vertex = head
            events.append((head, "queue"))
            break
        events.append((head, "pass"))
    return events
