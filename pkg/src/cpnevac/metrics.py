"""Route goal functions: traversal time with queueing delays, and
hazard-lateness safety.

Both metrics walk a path accumulating a predicted arrival time at each
node (traversal of hazard-scaled edge lengths plus queue delays, one
service per second per node). The time goal sums exactly those terms;
the safety goal charges how late the arrival is relative to the node's
predicted time-to-hazard, scaled by the intensity growth rate, plus a
per-edge safety value (its effective length) that keeps the goal
strictly positive on safe routes.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence


@dataclass(frozen=True)
class NodeStats:
    """Queueing snapshot of one decision node."""

    queue_length: float = 0.0
    arrival_rate: float = 0.0  # evacuees/s over the sliding window
    departure_rate: float = 1.0  # one evacuee served per second
    window: float = 10.0

    def __post_init__(self):
        if self.queue_length < 0 or self.arrival_rate < 0:
            raise ValueError("queue length and arrival rate must be >= 0")
        if self.window <= 0:
            raise ValueError("window must be > 0")


@dataclass(frozen=True)
class PathEvaluation:
    path: tuple[int, ...]
    goal_value: float
    breakdown: tuple[tuple[float, float], ...]  # per-hop term pair


def little_delay(stats: NodeStats, t_i: float) -> float:
    """Expected wait at a node for an arrival ``t_i`` seconds from now.

    Little's-theorem estimate from current queue length and measured
    rates, clamped at zero (a goal term must not decrease).
    """
    if t_i < 0:
        raise ValueError("t_i must be >= 0")
    a = stats.arrival_rate
    if a <= 0.0:
        return 0.0
    value = (stats.queue_length + t_i * (a - stats.departure_rate)) / a
    return max(0.0, value)


def _check_path(path: Sequence[int], lengths: Sequence[float], speed: float) -> None:
    if speed <= 0:
        raise ValueError("speed must be > 0")
    if len(path) < 2:
        raise ValueError("path needs at least 2 vertices")
    if len(lengths) != len(path) - 1:
        raise ValueError("need one effective length per hop")


def time_metric(
    path: Sequence[int],
    effective_lengths: Sequence[float],
    stats: Sequence[NodeStats],
    speed: float,
) -> PathEvaluation:
    """Predicted egress time along a path: traversal plus queue delays."""
    _check_path(path, effective_lengths, speed)
    if len(stats) != len(path) - 1:
        raise ValueError("need stats for every node except the final one")
    t = 0.0
    terms = []
    for e, st in zip(effective_lengths, stats):
        trav = e / speed
        delay = little_delay(st, t)
        terms.append((trav, delay))
        t += trav + delay
    return PathEvaluation(tuple(path), sum(a + b for a, b in terms), tuple(terms))


def safety_metric(
    path: Sequence[int],
    hazard_views: Sequence[tuple[float, float]],
    effective_lengths: Sequence[float],
    speed: float,
    stats: Sequence[NodeStats],
) -> PathEvaluation:
    """Hazard-lateness goal: outrun-the-fire penalty plus edge safety values.

    ``hazard_views`` carries (time-to-hazard, intensity growth rate) per
    node; arriving after the predicted hazard time is charged lateness
    times growth rate. Arrival times thread the same traversal model as
    the time goal so the two metrics stay comparable.
    """
    _check_path(path, effective_lengths, speed)
    if len(hazard_views) != len(path) - 1 or len(stats) != len(path) - 1:
        raise ValueError("need hazard view and stats for every non-final node")
    t = 0.0
    terms = []
    for e, (t_haz, growth), st in zip(effective_lengths, hazard_views, stats):
        late = t - t_haz
        lateness = late * growth if late > 0.0 else 0.0
        terms.append((lateness, e))
        t += e / speed + little_delay(st, t)
    return PathEvaluation(tuple(path), sum(a + b for a, b in terms), tuple(terms))


def path_congestion(
    effective_lengths: Sequence[float],
    stats: Sequence[NodeStats],
    speed: float,
) -> float:
    """Summed queue delays along a path (the congestion estimate)."""
    t = 0.0
    total = 0.0
    for e, st in zip(effective_lengths, stats):
        delay = little_delay(st, t)
        total += delay
        t += e / speed + delay
    return total


def update_arrival_rate(stats: NodeStats, arrivals_in_window: int, now: float) -> NodeStats:
    """Fresh stats with the windowed arrival-rate estimate."""
    if arrivals_in_window < 0:
        raise ValueError("arrival count must be >= 0")
    return replace(stats, arrival_rate=arrivals_in_window / stats.window)
