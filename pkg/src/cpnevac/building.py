"""Building graph model: decision-node vertices, sensored edges, exits.

The graph is loaded from a plain-text, line-oriented format (diffable
fixtures), validated against its structural invariants and immutable
afterwards, so concurrent replication runs can share one instance.

File format (UTF-8, '#' starts a comment, blank lines ignored)::

    V <id> <x> <y> <z> <exit:0|1>     vertex, coordinates in cm
    E <id> <v1> <v2>                  undirected edge, length from geometry
    S <id> <edge-id> <t>              sensor at parameter t in [0,1] along edge
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

Vec3 = tuple[float, float, float]

_HEADER = "# cpnevac building graph v1"


class GraphError(ValueError):
    """Base class for graph loading problems."""


class GraphFormatError(GraphError):
    """Malformed graph file; message carries the offending line number."""


class GraphValidationError(GraphError):
    """Structurally well-formed file violating a graph invariant."""


@dataclass(frozen=True)
class Vertex:
    id: int
    position: Vec3
    is_exit: bool


@dataclass(frozen=True)
class Edge:
    id: int
    endpoints: tuple[int, int]
    length: float  # cm, from endpoint geometry
    sensors: tuple[int, ...]  # ordered by parameter t


@dataclass(frozen=True)
class SensorNode:
    id: int
    edge: int
    offset: float  # parameter t in [0,1] from endpoints[0] toward endpoints[1]
    position: Vec3


def euclid(a: Vec3, b: Vec3) -> float:
    """Euclidean distance between two 3-vectors in cm."""
    if not all(math.isfinite(c) for c in (*a, *b)):
        raise ValueError("non-finite coordinate")
    return math.dist(a, b)


class BuildingGraph:
    """Validated, immutable building graph with fast adjacency queries."""

    def __init__(
        self,
        vertices: dict[int, Vertex],
        edges: dict[int, Edge],
        sensors: dict[int, SensorNode],
    ):
        self.vertices = vertices
        self.edges = edges
        self.sensors = sensors
        self._adjacency: dict[int, list[tuple[int, int]]] = {v: [] for v in vertices}
        for e in edges.values():
            a, b = e.endpoints
            self._adjacency[a].append((b, e.id))
            self._adjacency[b].append((a, e.id))
        for lst in self._adjacency.values():
            lst.sort()
        self.exit_ids = tuple(sorted(v.id for v in vertices.values() if v.is_exit))
        self._index: GraphIndex | None = None
        self.validate()

    def index(self) -> "GraphIndex":
        """Cached flat-array view (built on first use)."""
        if self._index is None:
            self._index = GraphIndex(self)
        return self._index

    # -- queries -------------------------------------------------------

    def vertex_ids(self) -> list[int]:
        return sorted(self.vertices)

    def neighbors(self, vertex_id: int) -> list[tuple[int, int]]:
        """(neighbor id, edge id) pairs in ascending neighbor order."""
        try:
            return self._adjacency[vertex_id]
        except KeyError:
            raise KeyError(f"unknown vertex id {vertex_id}") from None

    def is_exit(self, vertex_id: int) -> bool:
        return self.vertices[vertex_id].is_exit

    def other_end(self, edge_id: int, vertex_id: int) -> int:
        a, b = self.edges[edge_id].endpoints
        if vertex_id == a:
            return b
        if vertex_id == b:
            return a
        raise ValueError(f"vertex {vertex_id} not on edge {edge_id}")

    def edge_between(self, a: int, b: int) -> int:
        for nb, eid in self.neighbors(a):
            if nb == b:
                return eid
        raise ValueError(f"no edge between {a} and {b}")

    # -- validation ----------------------------------------------------

    def validate(self) -> None:
        if not self.vertices:
            raise GraphValidationError("graph has no vertices")
        for v in self.vertices.values():
            if not all(math.isfinite(c) for c in v.position):
                raise GraphValidationError(f"vertex {v.id}: non-finite position")
        if not self.exit_ids:
            raise GraphValidationError("no exit vertex")
        for e in self.edges.values():
            a, b = e.endpoints
            if a == b:
                raise GraphValidationError(f"edge {e.id}: endpoints not distinct")
            if a not in self.vertices or b not in self.vertices:
                raise GraphValidationError(f"edge {e.id}: unknown endpoint")
            if e.length <= 0:
                raise GraphValidationError(f"edge {e.id}: non-positive length")
            if not e.sensors:
                raise GraphValidationError(f"edge {e.id}: carries no sensor")
        for s in self.sensors.values():
            if s.edge not in self.edges:
                raise GraphValidationError(f"sensor {s.id}: unknown edge {s.edge}")
            if not 0.0 <= s.offset <= 1.0:
                raise GraphValidationError(f"sensor {s.id}: offset outside [0,1]")
            if self._segment_distance(s) > 1.0:
                raise GraphValidationError(f"sensor {s.id}: not on its host edge")
        # every vertex must reach an exit
        seen = set(self.exit_ids)
        frontier = list(self.exit_ids)
        while frontier:
            cur = frontier.pop()
            for nb, _ in self._adjacency[cur]:
                if nb not in seen:
                    seen.add(nb)
                    frontier.append(nb)
        unreachable = sorted(set(self.vertices) - seen)
        if unreachable:
            raise GraphValidationError(
                f"unreachable exit from vertices {unreachable}"
            )

    def _segment_distance(self, s: SensorNode) -> float:
        a, b = self.edges[s.edge].endpoints
        pa, pb = self.vertices[a].position, self.vertices[b].position
        expected = tuple(
            pa[i] + s.offset * (pb[i] - pa[i]) for i in range(3)
        )
        return math.dist(s.position, expected)


class GraphIndex:
    """Flat CSR view of a graph for the numeric kernels.

    Vertices map to indices 0..nv-1 in ascending id order; each directed
    half-edge occupies one "slot" (neighbors in ascending id order, so
    slot order matches ``BuildingGraph.neighbors``).
    """

    def __init__(self, graph: BuildingGraph):
        self.graph = graph
        self.vids: list[int] = graph.vertex_ids()
        self.vidx: dict[int, int] = {v: i for i, v in enumerate(self.vids)}
        nv = len(self.vids)
        indptr = np.zeros(nv + 1, dtype=np.int32)
        indices: list[int] = []
        slot_edge: list[int] = []
        for i, vid in enumerate(self.vids):
            for nb, eid in graph.neighbors(vid):
                indices.append(self.vidx[nb])
                slot_edge.append(eid)
            indptr[i + 1] = len(indices)
        self.indptr = indptr
        self.indices = np.asarray(indices, dtype=np.int32)
        self.slot_edge = np.asarray(slot_edge, dtype=np.int64)
        self.slot_len = np.asarray(
            [graph.edges[e].length for e in slot_edge], dtype=np.float64
        )
        self.is_exit = np.asarray(
            [1 if graph.is_exit(v) else 0 for v in self.vids], dtype=np.uint8
        )
        self.n_vertices = nv
        self.n_slots = len(indices)
        self.max_degree = int(np.max(np.diff(indptr))) if nv else 0

    def degree(self, vertex_idx: int) -> int:
        return int(self.indptr[vertex_idx + 1] - self.indptr[vertex_idx])

    def slot_of(self, tail_idx: int, head_idx: int) -> int:
        for s in range(self.indptr[tail_idx], self.indptr[tail_idx + 1]):
            if self.indices[s] == head_idx:
                return s
        raise ValueError(f"vertices {tail_idx} and {head_idx} not adjacent")


def spatial_set(graph: BuildingGraph, dn: int, radius: float) -> set[int]:
    """Sensors within Euclidean distance `radius` of the given vertex.

    `radius` may be ``math.inf`` to select every sensor in the graph.
    """
    if dn not in graph.vertices:
        raise KeyError(f"unknown vertex id {dn}")
    if radius < 0:
        raise ValueError("radius must be >= 0")
    if math.isinf(radius):
        return set(graph.sensors)
    origin = graph.vertices[dn].position
    return {
        s.id for s in graph.sensors.values() if euclid(origin, s.position) <= radius
    }


def incident_edges(graph: BuildingGraph, dn: int) -> list[int]:
    """Edge ids having `dn` as an endpoint, ascending."""
    if dn not in graph.vertices:
        raise KeyError(f"unknown vertex id {dn}")
    return sorted(eid for _, eid in graph.neighbors(dn))


def shortest_exit_paths(graph: BuildingGraph) -> dict[int, tuple[int, ...]]:
    """Static fallback routes: physically shortest path to the nearest exit.

    Multi-source Dijkstra from all exits over physical edge lengths; ties
    resolved toward the lower vertex id so the result is deterministic.
    """
    dist: dict[int, float] = {x: 0.0 for x in graph.exit_ids}
    next_hop: dict[int, int] = {}
    heap: list[tuple[float, int]] = [(0.0, x) for x in sorted(graph.exit_ids)]
    heapq.heapify(heap)
    done: set[int] = set()
    while heap:
        d, cur = heapq.heappop(heap)
        if cur in done:
            continue
        done.add(cur)
        for nb, eid in graph.neighbors(cur):
            cand = d + graph.edges[eid].length
            if cand < dist.get(nb, math.inf) - 1e-12:
                dist[nb] = cand
                next_hop[nb] = cur
                heapq.heappush(heap, (cand, nb))
    paths: dict[int, tuple[int, ...]] = {}
    for v in graph.vertex_ids():
        if graph.is_exit(v):
            paths[v] = (v,)
            continue
        hop, chain = v, [v]
        while not graph.is_exit(hop):
            hop = next_hop[hop]
            chain.append(hop)
        paths[v] = tuple(chain)
    return paths


# -- text format -------------------------------------------------------


def load_graph(path: str | Path) -> BuildingGraph:
    """Parse and validate a building graph file."""
    text = Path(path).read_text(encoding="utf-8")
    vertices: dict[int, Vertex] = {}
    raw_edges: dict[int, tuple[int, int]] = {}
    raw_sensors: dict[int, tuple[int, float]] = {}
    order: dict[int, list[tuple[float, int]]] = {}

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        kind = fields[0]
        try:
            if kind == "V":
                vid = int(fields[1])
                if vid in vertices:
                    raise GraphValidationError(f"duplicate vertex id {vid}")
                x, y, z = (float(c) for c in fields[2:5])
                is_exit = fields[5] == "1"
                if fields[5] not in ("0", "1"):
                    raise GraphFormatError("exit flag must be 0 or 1")
                vertices[vid] = Vertex(vid, (x, y, z), is_exit)
            elif kind == "E":
                eid = int(fields[1])
                if eid in raw_edges:
                    raise GraphValidationError(f"duplicate edge id {eid}")
                raw_edges[eid] = (int(fields[2]), int(fields[3]))
            elif kind == "S":
                sid = int(fields[1])
                if sid in raw_sensors:
                    raise GraphValidationError(f"duplicate sensor id {sid}")
                raw_sensors[sid] = (int(fields[2]), float(fields[3]))
            else:
                raise GraphFormatError(f"unknown record type {kind!r}")
        except GraphError as exc:
            raise type(exc)(f"line {lineno}: {exc}") from None
        except (IndexError, ValueError) as exc:
            raise GraphFormatError(f"line {lineno}: {exc}") from None

    edges: dict[int, Edge] = {}
    sensors: dict[int, SensorNode] = {}
    for sid, (eid, t) in raw_sensors.items():
        order.setdefault(eid, []).append((t, sid))
    for eid, (a, b) in raw_edges.items():
        if a not in vertices or b not in vertices:
            raise GraphValidationError(f"edge {eid}: unknown endpoint")
        pa, pb = vertices[a].position, vertices[b].position
        length = math.dist(pa, pb)
        attached = tuple(sid for _, sid in sorted(order.get(eid, [])))
        edges[eid] = Edge(eid, (a, b), length, attached)
        for t, sid in order.get(eid, []):
            pos = tuple(pa[i] + t * (pb[i] - pa[i]) for i in range(3))
            sensors[sid] = SensorNode(sid, eid, t, pos)
    for sid, (eid, _) in raw_sensors.items():
        if eid not in raw_edges:
            raise GraphValidationError(f"sensor {sid}: unknown edge {eid}")

    return BuildingGraph(vertices, edges, sensors)


def save_graph(graph: BuildingGraph, path: str | Path) -> None:
    """Write the canonical text form (sorted records, repr floats)."""
    lines = [_HEADER]
    for vid in sorted(graph.vertices):
        v = graph.vertices[vid]
        x, y, z = v.position
        lines.append(f"V {vid} {x!r} {y!r} {z!r} {1 if v.is_exit else 0}")
    for eid in sorted(graph.edges):
        a, b = graph.edges[eid].endpoints
        lines.append(f"E {eid} {a} {b}")
    for sid in sorted(graph.sensors):
        s = graph.sensors[sid]
        lines.append(f"S {sid} {s.edge} {s.offset!r}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def fixture_path() -> Path:
    """Location of the bundled 3-floor synthetic building graph."""
    return Path(__file__).parent / "data" / "building3f.graph"
