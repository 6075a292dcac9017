"""Hazard propagation and decision-node hazard quantities.

A fire spreads radially from its origin at constant speed; a sensor
reports once the front reaches it and its intensity level climbs on a
fixed ramp. Decision nodes combine the sensed intensities into effective
edge lengths and a predicted time-to-hazard, either from the origin
prediction alone (no spatial information) or refined by the sensors
inside their spatial set.

The module offers the scalar reference operations (used directly by the
tests) and :class:`HazardField`, the vectorized per-tick refresh the
engine uses; the two are asserted equivalent in the test suite.
"""
from __future__ import annotations

import math
from bisect import bisect_left
from dataclasses import dataclass, field

import numpy as np

from .building import BuildingGraph, Vec3, euclid, spatial_set

VERY_LARGE_TIME = 1e9  # dominates any min() without overflowing
MAX_LEVEL = 8
INTENSITY_SCALE = 1000.0
SAFE_INTENSITY = 1.0


@dataclass
class HazardScenario:
    """Where and when the fire starts and how it grows."""

    origin: Vec3
    start_time: float = 5.0
    spread_rate: float = 20.0  # cm/s
    intensity_ramp: float = 30.0  # seconds per level step

    def __post_init__(self):
        if self.spread_rate <= 0:
            raise ValueError("spread rate must be > 0")
        if self.intensity_ramp <= 0:
            raise ValueError("intensity ramp must be > 0")


@dataclass
class SensorState:
    detected: bool = False
    detection_time: float | None = None
    level: int | None = None  # in [1, 8] once detected


@dataclass
class HazardState:
    scenario: HazardScenario
    sensor_states: dict[int, SensorState] = field(default_factory=dict)

    def state_of(self, sensor_id: int) -> SensorState:
        return self.sensor_states.setdefault(sensor_id, SensorState())


@dataclass
class DnHazardView:
    """Per-node hazard summary at one instant."""

    dn: int
    t_initial: float
    t_predn: dict[int, float]
    t_enode: dict[int, float]
    t_haz: float
    growth_rate: float


def intensity(state: SensorState) -> float:
    """Sensed hazard intensity: 1 when clear, level * 10^3 when burning."""
    if not state.detected:
        return SAFE_INTENSITY
    return state.level * INTENSITY_SCALE


def propagate(state: HazardState, graph: BuildingGraph, now: float) -> HazardState:
    """Advance the radial front to `now`, detecting sensors it has reached.

    Detection time is the analytic crossing instant of the front, so the
    result does not depend on how often this is called. Level climbs one
    step per ramp interval, capped at 8.
    """
    sc = state.scenario
    if now < sc.start_time:
        return state
    radius = sc.spread_rate * (now - sc.start_time)
    for sensor in graph.sensors.values():
        dist = euclid(sc.origin, sensor.position)
        if dist <= radius:
            st = state.state_of(sensor.id)
            if not st.detected:
                st.detected = True
                st.detection_time = sc.start_time + dist / sc.spread_rate
            exposure = now - st.detection_time
            st.level = min(MAX_LEVEL, 1 + math.floor(exposure / sc.intensity_ramp))
    return state


def growth_rate(state: HazardState, now: float) -> float:
    """Intensity growth rate used in the safety goal (0 before ignition)."""
    if now < state.scenario.start_time:
        return 0.0
    return INTENSITY_SCALE / state.scenario.intensity_ramp


def _representative_sensor(graph: BuildingGraph, dn: int, edge_id: int) -> int:
    """The sensor on the edge closest to the node (ties to the lower id)."""
    origin = graph.vertices[dn].position
    best_id = -1
    best_d = math.inf
    for sid in graph.edges[edge_id].sensors:
        d = euclid(origin, graph.sensors[sid].position)
        if d < best_d or (d == best_d and sid < best_id):
            best_d = d
            best_id = sid
    return best_id


def effective_length(
    graph: BuildingGraph,
    state: HazardState,
    dn: int,
    edge_id: int,
    radius: float,
) -> float:
    """Hazard-scaled length of an incident edge as seen from `dn`.

    The edge's own sensed intensity scales its physical length; with a
    non-trivial spatial set the mean intensity of the other in-range
    sensors is added, so surrounding hazard inflates the edge too.
    """
    edge = graph.edges[edge_id]
    if dn not in edge.endpoints:
        raise ValueError(f"edge {edge_id} not incident to vertex {dn}")
    rep = _representative_sensor(graph, dn, edge_id)
    h_rep = intensity(state.state_of(rep))
    if radius == 0:
        return edge.length * h_rep
    members = spatial_set(graph, dn, radius)
    n = len(members)
    if n <= 1:
        return edge.length * h_rep
    others = 0.0
    for sid in sorted(members):
        if sid != rep:
            others += intensity(state.state_of(sid))
    return edge.length * (h_rep + others / (n - 1))


def node_hazard_view(
    state: HazardState,
    graph: BuildingGraph,
    dn: int,
    radius: float,
    now: float,
) -> DnHazardView:
    """Predicted time-to-hazard of a node and its ingredients."""
    sc = state.scenario
    pos = graph.vertices[dn].position
    t_initial = euclid(pos, sc.origin) / sc.spread_rate
    if now < sc.start_time:
        return DnHazardView(dn, t_initial, {}, {}, VERY_LARGE_TIME, 0.0)
    elapsed = now - sc.start_time
    base = t_initial - elapsed
    t_predn: dict[int, float] = {}
    t_enode: dict[int, float] = {}
    t_haz = base
    if radius != 0:
        for sid in sorted(spatial_set(graph, dn, radius)):
            st = state.state_of(sid)
            t_predn[sid] = euclid(pos, graph.sensors[sid].position) / sc.spread_rate
            if st.detected:
                t_enode[sid] = now - st.detection_time
                t_haz = min(t_haz, t_predn[sid] - t_enode[sid])
            else:
                t_haz = min(t_haz, VERY_LARGE_TIME)
    return DnHazardView(
        dn, t_initial, t_predn, t_enode, max(0.0, t_haz), growth_rate(state, now)
    )


def hazard_time(
    state: HazardState,
    graph: BuildingGraph,
    dn: int,
    radius: float,
    now: float,
) -> float:
    """Seconds until the node is predicted to become hazardous (floor 0)."""
    return node_hazard_view(state, graph, dn, radius, now).t_haz


class HazardField:
    """Vectorized hazard state over the whole graph for the engine.

    Precomputes the static geometry (front distances, spatial-set
    membership, representative sensors per half-edge) once; ``refresh``
    then updates the shared per-tick arrays in O(sensors + slots).
    """

    def __init__(self, graph: BuildingGraph, scenario: HazardScenario, radius: float):
        self.graph = graph
        self.scenario = scenario
        self.radius = radius
        idx = graph.index()
        self.idx = idx

        self.sids: list[int] = sorted(graph.sensors)
        self.sidx = {s: i for i, s in enumerate(self.sids)}
        spos = np.array(
            [graph.sensors[s].position for s in self.sids], dtype=np.float64
        )
        self._origin_dist = np.linalg.norm(
            spos - np.asarray(scenario.origin, dtype=np.float64), axis=1
        )
        self._det_time_static = scenario.start_time + self._origin_dist / scenario.spread_rate

        vpos = np.array(
            [graph.vertices[v].position for v in idx.vids], dtype=np.float64
        )
        self._t_initial = (
            np.linalg.norm(vpos - np.asarray(scenario.origin), axis=1)
            / scenario.spread_rate
        )

        # spatial-set membership per vertex (static: geometry only)
        mem_indptr = [0]
        mem_sensor: list[int] = []
        mem_tpred: list[float] = []
        for vi, vid in enumerate(idx.vids):
            if radius > 0:
                d = np.linalg.norm(spos - vpos[vi], axis=1)
                sel = np.nonzero(d <= radius)[0] if not math.isinf(radius) else np.arange(len(self.sids))
                for si in sel:
                    mem_sensor.append(int(si))
                    mem_tpred.append(float(d[si]) / scenario.spread_rate)
            mem_indptr.append(len(mem_sensor))
        self._mem_indptr = np.asarray(mem_indptr, dtype=np.int64)
        self._mem_sensor = np.asarray(mem_sensor, dtype=np.int64)
        self._mem_tpred = np.asarray(mem_tpred, dtype=np.float64)
        self._mem_counts = np.diff(self._mem_indptr)
        self._mem_owner = np.repeat(
            np.arange(idx.n_vertices, dtype=np.int64), self._mem_counts
        )

        # representative sensor per half-edge slot (nearest to the tail)
        tail = np.repeat(np.arange(idx.n_vertices, dtype=np.int64), np.diff(idx.indptr))
        rep = np.empty(idx.n_slots, dtype=np.int64)
        rep_in_set = np.zeros(idx.n_slots, dtype=bool)
        for slot in range(idx.n_slots):
            vid = idx.vids[int(tail[slot])]
            sid = _representative_sensor(graph, vid, int(idx.slot_edge[slot]))
            rep[slot] = self.sidx[sid]
            if radius > 0:
                dist = euclid(graph.vertices[vid].position, graph.sensors[sid].position)
                rep_in_set[slot] = dist <= radius
        self._slot_tail = tail
        self._slot_rep = rep
        self._slot_rep_in_set = rep_in_set

        # per-edge sensor lookup for evacuee exposure queries
        self._edge_sensors: dict[int, tuple[list[float], list[int]]] = {}
        for eid, e in graph.edges.items():
            pairs = sorted((graph.sensors[s].offset, self.sidx[s]) for s in e.sensors)
            self._edge_sensors[eid] = ([p[0] for p in pairs], [p[1] for p in pairs])
        # nearest incident-edge sensor set per vertex (exposure at a node)
        self._vertex_reps: list[np.ndarray] = []
        for vi in range(idx.n_vertices):
            lo, hi = idx.indptr[vi], idx.indptr[vi + 1]
            self._vertex_reps.append(np.unique(rep[lo:hi]))

        nslots = idx.n_slots
        nv = idx.n_vertices
        self.detected = np.zeros(len(self.sids), dtype=bool)
        self.level = np.zeros(len(self.sids), dtype=np.int64)
        self.sensor_h = np.ones(len(self.sids), dtype=np.float64)
        self.eff_len = idx.slot_len.copy()
        self.t_haz = np.full(nv, VERY_LARGE_TIME, dtype=np.float64)
        self.growth = np.zeros(nv, dtype=np.float64)
        self.now = -math.inf

    def refresh(self, now: float) -> None:
        """Recompute detection, intensities, effective lengths, t_haz.

        Writes in place: the arrays keep their identity so the routing
        environment can alias them.
        """
        sc = self.scenario
        self.now = now
        idx = self.idx
        started = now >= sc.start_time
        if not started:
            self.detected[:] = False
            self.level[:] = 0
            self.sensor_h[:] = SAFE_INTENSITY
        else:
            elapsed = now - sc.start_time
            radius_front = sc.spread_rate * elapsed
            self.detected[:] = self._origin_dist <= radius_front
            exposure = now - self._det_time_static
            self.level[:] = np.where(
                self.detected,
                np.minimum(MAX_LEVEL, 1 + np.floor(exposure / sc.intensity_ramp)).astype(np.int64),
                0,
            )
            self.sensor_h[:] = np.where(
                self.detected, self.level * INTENSITY_SCALE, SAFE_INTENSITY
            )

        h_rep = self.sensor_h[self._slot_rep]
        if self.radius == 0:
            self.eff_len[:] = idx.slot_len * h_rep
        else:
            sums = np.bincount(
                self._mem_owner,
                weights=self.sensor_h[self._mem_sensor],
                minlength=idx.n_vertices,
            )
            n = self._mem_counts[self._slot_tail]
            others = sums[self._slot_tail] - np.where(self._slot_rep_in_set, h_rep, 0.0)
            spatial = np.where(n >= 2, others / np.maximum(n - 1, 1), 0.0)
            self.eff_len[:] = idx.slot_len * (h_rep + spatial)

        if not started:
            self.t_haz[:] = VERY_LARGE_TIME
            self.growth[:] = 0.0
            return
        elapsed = now - sc.start_time
        base = self._t_initial - elapsed
        if self.radius == 0 or len(self._mem_sensor) == 0:
            self.t_haz[:] = np.maximum(0.0, base)
        else:
            det = self.detected[self._mem_sensor]
            val = np.where(
                det,
                self._mem_tpred - (now - self._det_time_static[self._mem_sensor]),
                VERY_LARGE_TIME,
            )
            mins = np.minimum.reduceat(
                np.append(val, VERY_LARGE_TIME), self._mem_indptr[:-1]
            )
            mins = np.where(self._mem_counts > 0, mins, VERY_LARGE_TIME)
            self.t_haz[:] = np.maximum(0.0, np.minimum(base, mins))
        self.growth[:] = INTENSITY_SCALE / sc.intensity_ramp

    # -- exposure queries (evacuee damage) --------------------------------

    def edge_intensity(self, edge_id: int, t: float) -> float:
        """Intensity at parameter t along an edge (nearest sensor)."""
        offsets, sidxs = self._edge_sensors[edge_id]
        i = bisect_left(offsets, t)
        best = None
        for j in (i - 1, i):
            if 0 <= j < len(offsets):
                d = abs(offsets[j] - t)
                if best is None or d < best[0]:
                    best = (d, sidxs[j])
        return float(self.sensor_h[best[1]])

    def vertex_intensity(self, vertex_idx: int) -> float:
        """Worst intensity among the nearest sensors of incident edges."""
        return float(np.max(self.sensor_h[self._vertex_reps[vertex_idx]]))

    def sensor_level(self, sensor_id: int) -> int:
        return int(self.level[self.sidx[sensor_id]])

    def to_state(self) -> HazardState:
        """Scalar HazardState snapshot equivalent to the current arrays."""
        st = HazardState(self.scenario)
        for sid, si in self.sidx.items():
            if self.detected[si]:
                st.sensor_states[sid] = SensorState(
                    True, float(self._det_time_static[si]), int(self.level[si])
                )
        return st
