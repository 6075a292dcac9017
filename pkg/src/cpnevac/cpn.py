"""Cognitive-packet route discovery engine.

Each decision node runs, per metric class, a small recurrent random
network with one neuron per neighbor. Exploratory smart packets walk the
graph loop-free, choosing the most excited unvisited neuron (with a
small exploration probability); reaching an exit produces an
acknowledgement that travels the path backwards, depositing the measured
goal value of every suffix into the node mailboxes and
rewarding/punishing the responsible neurons with the inverse goal value.

Walk and learning numerics live in the kernel backend
(:mod:`cpnevac._kernels`); this module owns packets, mailboxes and the
per-node orchestration.
"""
from __future__ import annotations

import math
from collections import namedtuple
from dataclasses import dataclass
from enum import IntEnum
from typing import Optional

import numpy as np

from . import _kernels as kernels
from .building import BuildingGraph
from .hazard import VERY_LARGE_TIME
from .metrics import NodeStats, path_congestion, safety_metric, time_metric


class MetricClass(IntEnum):
    TIME = 0
    SAFETY = 1


HopMeasure = namedtuple(
    "HopMeasure",
    [
        "edge_id",
        "effective_length",
        "hazard_time",
        "growth_rate",
        "queue_length",
        "arrival_rate",
        "departure_rate",
    ],
)


@dataclass
class SmartPacket:
    source: int
    metric_class: MetricClass
    visited: list[int]
    measurements: list[HopMeasure]
    hop_budget: int
    age_budget: float


@dataclass
class AckPacket:
    reverse_path: tuple[int, ...]
    measurements: tuple[HopMeasure, ...]
    goal_value: Optional[float] = None
    # kernel-space caches filled by the router that created the packet
    path_idx: Optional[np.ndarray] = None
    slots: Optional[np.ndarray] = None

    def forward_path(self) -> tuple[int, ...]:
        return tuple(reversed(self.reverse_path))


@dataclass(frozen=True)
class MailboxEntry:
    path: tuple[int, ...]  # from the owning node to an exit
    goal_value: float
    congestion_estimate: float
    created_at: float


def _rank(entry: MailboxEntry):
    return (entry.goal_value, -entry.created_at, entry.path)


class Mailbox:
    """Bounded, expiring store of discovered routes per metric class.

    Entries are kept ranked by ascending goal value; a rediscovered path
    replaces its old entry, expired entries are dropped on update and the
    worst entry is evicted when capacity is exceeded.
    """

    def __init__(self, capacity: int = 10, expiry: float = 60.0):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.expiry = expiry
        self._entries: dict[MetricClass, list[MailboxEntry]] = {
            cls: [] for cls in MetricClass
        }

    def entries(self, metric_class: MetricClass) -> list[MailboxEntry]:
        return self._entries[metric_class]

    def prune(self, now: float) -> None:
        for lst in self._entries.values():
            if lst and any(now - e.created_at > self.expiry for e in lst):
                lst[:] = [e for e in lst if now - e.created_at <= self.expiry]

    def insert(self, metric_class: MetricClass, entry: MailboxEntry, now: float) -> None:
        self.prune(now)
        lst = self._entries[metric_class]
        for i, e in enumerate(lst):
            if e.path == entry.path:
                lst[i] = entry
                break
        else:
            lst.append(entry)
        lst.sort(key=_rank)
        del lst[self.capacity :]


def best_path(mailbox: Mailbox, metric_class: MetricClass) -> Optional[MailboxEntry]:
    """Top-ranked entry: minimal goal value, newest first among ties."""
    lst = mailbox.entries(metric_class)
    return lst[0] if lst else None


def congestion_ease_path(
    mailbox: Mailbox, metric_class: MetricClass, band_ratio: float
) -> Optional[MailboxEntry]:
    """Least congested entry whose goal value stays within the band.

    Candidates are the entries with goal value at most ``band_ratio``
    times the best; ties resolve toward the better goal value.
    """
    if band_ratio < 1.0:
        raise ValueError("band_ratio must be >= 1")
    lst = mailbox.entries(metric_class)
    if not lst:
        return None
    bound = band_ratio * lst[0].goal_value
    candidates = [e for e in lst if e.goal_value <= bound]
    return min(
        candidates,
        key=lambda e: (e.congestion_estimate, e.goal_value, -e.created_at, e.path),
    )


@dataclass
class RouterParams:
    exploration: float = 0.05
    threshold_smoothing: float = 0.8
    learning_rate: float = 0.1
    mailbox_capacity: int = 10
    entry_expiry: float = 60.0
    hop_budget: Optional[int] = None  # default: max(30, ceil(4*sqrt(nv)))
    age_budget: float = 30.0
    band_ratio: float = 1.5
    ext_excitation: float = 0.25
    ext_inhibition: float = 0.0
    damping: float = 0.5
    solve_tol: float = 1e-6
    solve_max_iter: int = 200


@dataclass
class SpStats:
    launched: int = 0
    delivered: int = 0
    dropped: int = 0
    lost_acks: int = 0


@dataclass
class EnvArrays:
    """Shared per-tick measurement arrays the router samples from.

    ``eff_len`` is indexed by half-edge slot (tail node's view of the
    edge); the rest by vertex index.
    """

    eff_len: np.ndarray
    t_haz: np.ndarray
    growth: np.ndarray
    queue_len: np.ndarray
    arrival: np.ndarray

    @classmethod
    def static(cls, graph: BuildingGraph) -> "EnvArrays":
        """Frozen hazard-free, queue-free environment (physical lengths)."""
        idx = graph.index()
        nv = idx.n_vertices
        return cls(
            eff_len=idx.slot_len.copy(),
            t_haz=np.full(nv, VERY_LARGE_TIME),
            growth=np.zeros(nv),
            queue_len=np.zeros(nv),
            arrival=np.zeros(nv),
        )


class DeciderView:
    """One node's next-hop learner for one metric class.

    Thin view over the router's flat arrays: neighbors in ascending id
    order, excitatory/inhibitory weight matrices between their neurons,
    steady-state excitation ``q`` and the smoothed reward threshold.
    """

    def __init__(self, router: "CpnRouter", metric_class: MetricClass, vid: int):
        idx = router.idx
        vi = idx.vidx[vid]
        lo = int(idx.indptr[vi])
        d = idx.degree(vi)
        off = int(router._w_off[vi])
        self._router = router
        self._cls = metric_class
        self.node = vid
        self.neighbors = tuple(int(idx.vids[j]) for j in idx.indices[lo : lo + d])
        self.w_plus = router._w_plus[metric_class][off : off + d * d].reshape(d, d)
        self.w_minus = router._w_minus[metric_class][off : off + d * d].reshape(d, d)
        self.q = router._q_flat[metric_class][lo : lo + d]
        self._thr = router._thresholds[metric_class][vi : vi + 1]

    @property
    def threshold(self) -> float:
        return float(self._thr[0])

    @property
    def exploration(self) -> float:
        return self._router.params.exploration

    def set_weights(self, w_plus, w_minus) -> None:
        wp = np.asarray(w_plus, dtype=np.float64)
        wm = np.asarray(w_minus, dtype=np.float64)
        if wp.shape != self.w_plus.shape or wm.shape != self.w_minus.shape:
            raise ValueError("weight matrices must be (degree, degree)")
        if (wp < 0).any() or (wm < 0).any():
            raise ValueError("weights must be non-negative")
        self.w_plus[:] = wp
        self.w_minus[:] = wm
        self.resolve()

    def resolve(self) -> int:
        p = self._router.params
        return kernels.solve_node(
            self.w_plus,
            self.w_minus,
            self.q,
            p.ext_excitation,
            p.ext_inhibition,
            p.damping,
            p.solve_tol,
            p.solve_max_iter,
        )

    def reinforce(self, chosen: int, reward: float) -> None:
        """Apply one learning step for having routed toward ``chosen``."""
        if reward <= 0:
            raise ValueError("reward must be > 0")
        p = self._router.params
        kernels.reinforce_node(
            self.w_plus,
            self.w_minus,
            self.q,
            self._thr,
            self.neighbors.index(chosen),
            reward,
            p.threshold_smoothing,
            p.learning_rate,
            p.ext_excitation,
            p.ext_inhibition,
            p.damping,
            p.solve_tol,
            p.solve_max_iter,
        )


def sp_next_hop(decider: DeciderView, visited, rng: np.ndarray) -> Optional[int]:
    """Next hop of a smart packet at the decider's node, or None to drop.

    With the exploration probability the hop is uniform over unvisited
    neighbors, otherwise the most excited unvisited neuron wins (exact
    excitation ties resolved uniformly).
    """
    cand = [
        (j, vid) for j, vid in enumerate(decider.neighbors) if vid not in visited
    ]
    if not cand:
        return None
    if len(cand) == 1:
        return cand[0][1]
    if kernels.pcg_uniform(rng) < decider.exploration:
        return cand[kernels.pcg_bounded(rng, len(cand))][1]
    q = decider.q
    best = q[cand[0][0]]
    for j, _ in cand[1:]:
        if q[j] > best:
            best = q[j]
    ties = [c for c in cand if q[c[0]] == best]
    if len(ties) > 1:
        return ties[kernels.pcg_bounded(rng, len(ties))][1]
    return ties[0][1]


class CpnRouter:
    """Per-run route-discovery state over one graph.

    Owns the mailbox of every vertex and, per metric class, the flat
    neuron arrays the kernels operate on. All randomness flows through
    one PCG32 stream, so a (seed, call sequence) pair fully determines
    behavior on either kernel backend.
    """

    def __init__(
        self,
        graph: BuildingGraph,
        params: RouterParams,
        class_speeds: dict[MetricClass, float],
        env: EnvArrays,
        seed: int,
    ):
        idx = graph.index()
        if idx.max_degree > 64:
            raise ValueError("vertex degree above kernel limit (64)")
        self.graph = graph
        self.idx = idx
        self.params = params
        self.class_speeds = dict(class_speeds)
        self.env = env
        nv = idx.n_vertices

        degrees = np.diff(idx.indptr)
        self._w_off = np.zeros(nv, dtype=np.int64)
        np.cumsum(degrees[:-1] ** 2, out=self._w_off[1:])
        total_w = int(np.sum(degrees**2))

        self._w_plus: dict[MetricClass, np.ndarray] = {}
        self._w_minus: dict[MetricClass, np.ndarray] = {}
        self._q_flat: dict[MetricClass, np.ndarray] = {}
        self._thresholds: dict[MetricClass, np.ndarray] = {}
        for cls in MetricClass:
            wp = np.zeros(total_w)
            wm = np.zeros(total_w)
            qf = np.zeros(idx.n_slots)
            for vi in range(nv):
                d = int(degrees[vi])
                if d == 0:
                    continue
                off = int(self._w_off[vi])
                if d >= 2:
                    w0 = 1.0 / (2 * (d - 1))
                    block = np.full((d, d), w0)
                    np.fill_diagonal(block, 0.0)
                    wp[off : off + d * d] = block.ravel()
                    wm[off : off + d * d] = block.ravel()
                lo = int(idx.indptr[vi])
                kernels.solve_node(
                    wp[off : off + d * d].reshape(d, d),
                    wm[off : off + d * d].reshape(d, d),
                    qf[lo : lo + d],
                    params.ext_excitation,
                    params.ext_inhibition,
                    params.damping,
                    params.solve_tol,
                    params.solve_max_iter,
                )
            self._w_plus[cls] = wp
            self._w_minus[cls] = wm
            self._q_flat[cls] = qf
            self._thresholds[cls] = np.zeros(nv)

        self.mailboxes: dict[int, Mailbox] = {
            vid: Mailbox(params.mailbox_capacity, params.entry_expiry)
            for vid in idx.vids
            if not graph.is_exit(vid)
        }
        self.hop_budget = (
            params.hop_budget
            if params.hop_budget is not None
            else max(30, math.ceil(4 * math.sqrt(nv)))
        )
        self.rng = np.zeros(2, dtype=np.uint64)
        kernels.pcg_seed(self.rng, seed)
        self.stats = SpStats()
        self._stamp = 0
        self._visited = np.zeros(nv, dtype=np.int64)
        self._path_buf = np.zeros(self.hop_budget + 2, dtype=np.int32)
        self._slot_buf = np.zeros(self.hop_budget + 1, dtype=np.int32)
        self._cand_buf = np.zeros(max(idx.max_degree, 1), dtype=np.int32)
        self._goal_buf = np.zeros(self.hop_budget + 1)
        self._cong_buf = np.zeros(self.hop_budget + 1)

    # -- operations ------------------------------------------------------

    def decider(self, vid: int, metric_class: MetricClass) -> DeciderView:
        return DeciderView(self, metric_class, vid)

    def launch_sp(
        self, source: int, metric_class: MetricClass, now: float, process: bool = True
    ) -> Optional[AckPacket]:
        """Run one smart-packet exploration cycle from ``source``.

        Returns the acknowledgement when the walk reaches an exit (after
        propagating its updates along the reverse path unless ``process``
        is False), or None when the packet was dropped.
        """
        idx = self.idx
        if self.graph.is_exit(source):
            raise ValueError("smart packets launch from decision nodes, not exits")
        self._stamp += 1
        self.stats.launched += 1
        n = kernels.walk(
            idx.indptr,
            idx.indices,
            idx.is_exit,
            self._q_flat[metric_class],
            idx.vidx[source],
            self.params.exploration,
            self.hop_budget,
            self.rng,
            self._visited,
            self._stamp,
            self._path_buf,
            self._slot_buf,
            self._cand_buf,
        )
        if n == 0:
            self.stats.dropped += 1
            return None
        self.stats.delivered += 1
        path_idx = self._path_buf[:n].copy()
        slots = self._slot_buf[: n - 1].copy()
        vids = idx.vids
        forward = tuple(vids[i] for i in path_idx.tolist())
        env = self.env
        packet = SmartPacket(
            source=source,
            metric_class=metric_class,
            visited=list(forward),
            measurements=[
                HopMeasure(
                    edge_id=int(idx.slot_edge[s]),
                    effective_length=float(env.eff_len[s]),
                    hazard_time=float(env.t_haz[p]),
                    growth_rate=float(env.growth[p]),
                    queue_length=float(env.queue_len[p]),
                    arrival_rate=float(env.arrival[p]),
                    departure_rate=1.0,
                )
                for p, s in zip(path_idx[:-1].tolist(), slots.tolist())
            ],
            hop_budget=self.hop_budget,
            age_budget=self.params.age_budget,
        )
        ack = AckPacket(
            reverse_path=tuple(reversed(packet.visited)),
            measurements=tuple(packet.measurements),
            path_idx=path_idx,
            slots=slots,
        )
        if process:
            self.process_ack(ack, metric_class, now)
        return ack

    def process_ack(self, ack: AckPacket, metric_class: MetricClass, now: float) -> None:
        """Apply an acknowledgement along its whole reverse path.

        Every node on the path receives a mailbox entry for its suffix
        and a learning update rewarding the neighbor it chose.
        """
        idx = self.idx
        if ack.path_idx is None:
            forward = ack.forward_path()
            ack.path_idx = np.asarray(
                [idx.vidx[v] for v in forward], dtype=np.int32
            )
            ack.slots = np.asarray(
                [
                    idx.slot_of(idx.vidx[a], idx.vidx[b])
                    for a, b in zip(forward[:-1], forward[1:])
                ],
                dtype=np.int32,
            )
        n = len(ack.path_idx)
        p = self.params
        env = self.env
        kernels.process_ack(
            idx.indptr,
            idx.indices,
            self._w_off,
            self._w_plus[metric_class],
            self._w_minus[metric_class],
            self._q_flat[metric_class],
            self._thresholds[metric_class],
            env.eff_len,
            env.t_haz,
            env.growth,
            env.queue_len,
            env.arrival,
            int(metric_class),
            self.class_speeds[metric_class],
            ack.path_idx,
            ack.slots,
            n,
            p.ext_excitation,
            p.ext_inhibition,
            p.damping,
            p.solve_tol,
            p.solve_max_iter,
            p.threshold_smoothing,
            p.learning_rate,
            self._goal_buf,
            self._cong_buf,
        )
        ack.goal_value = float(self._goal_buf[0])
        forward = ack.forward_path()
        for i in range(n - 1):
            entry = MailboxEntry(
                path=forward[i:],
                goal_value=float(self._goal_buf[i]),
                congestion_estimate=float(self._cong_buf[i]),
                created_at=now,
            )
            self.mailboxes[forward[i]].insert(metric_class, entry, now)

    def on_ack(self, dn: int, ack: AckPacket, metric_class: MetricClass, now: float) -> None:
        """Reference single-node ACK handling over the packet measurements.

        Equivalent to the slice of :meth:`process_ack` touching ``dn``;
        exercised against it by the parity tests. An ACK arriving at a
        node that is not on its path is counted lost and ignored.
        """
        forward = ack.forward_path()
        if dn not in forward:
            self.stats.lost_acks += 1
            return
        i = forward.index(dn)
        if i == len(forward) - 1:
            return
        suffix = forward[i:]
        meas = ack.measurements[i:]
        eff = [m.effective_length for m in meas]
        stats = [
            NodeStats(m.queue_length, m.arrival_rate, m.departure_rate)
            for m in meas
        ]
        speed = self.class_speeds[metric_class]
        if metric_class == MetricClass.TIME:
            ev = time_metric(suffix, eff, stats, speed)
        else:
            views = [(m.hazard_time, m.growth_rate) for m in meas]
            ev = safety_metric(suffix, views, eff, speed, stats)
        entry = MailboxEntry(
            path=suffix,
            goal_value=ev.goal_value,
            congestion_estimate=path_congestion(eff, stats, speed),
            created_at=now,
        )
        self.mailboxes[dn].insert(metric_class, entry, now)
        self.decider(dn, metric_class).reinforce(forward[i + 1], 1.0 / ev.goal_value)

    def best_entry(self, dn: int, metric_class: MetricClass) -> Optional[MailboxEntry]:
        return best_path(self.mailboxes[dn], metric_class)
