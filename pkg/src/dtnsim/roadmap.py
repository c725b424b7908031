"""Road network handling: WKT parsing, graph construction, repair, paths.

Coordinates are planar meters.  A road graph is an undirected weighted
graph; edge weights are Euclidean lengths.  Graphs are immutable after
construction, so concurrent read-only queries are safe.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from heapq import heappop, heappush

__all__ = [
    "WktError",
    "MapError",
    "RoadGraph",
    "GroupOverlay",
    "RepairReport",
    "parse_wkt",
    "build_graph",
    "repair_connectivity",
    "shortest_path",
    "path_length",
    "dump_wkt",
    "snap_overlay",
    "RoutePlanner",
]

# Tolerance for "is this edge on a shortest path" checks.  Path lengths in
# a desk-scale world are < 1e6 m, so double rounding error stays orders of
# magnitude below this while genuine detours stay orders above it.
_PATH_EPS = 1e-6


class WktError(ValueError):
    """Malformed WKT input; `offset` is the byte offset of the problem."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class MapError(ValueError):
    """A structurally invalid map or overlay."""


# ---------------------------------------------------------------------------
# WKT parsing


def parse_wkt(text: str) -> list[list[tuple[float, float]]]:
    """Parse LINESTRING / MULTILINESTRING / POINT records into polylines.

    Returns one point list per record part.  POINT yields a single-point
    polyline (used only for stationary placement); LINESTRINGs must have
    at least two points.  Whitespace and case are not significant.
    """
    polylines: list[list[tuple[float, float]]] = []
    pos = 0
    n = len(text)

    def skip_ws(i: int) -> int:
        while i < n and text[i].isspace():
            i += 1
        return i

    def expect(i: int, char: str) -> int:
        i = skip_ws(i)
        if i >= n or text[i] != char:
            raise WktError(f"expected '{char}'", i)
        return i + 1

    def read_number(i: int) -> tuple[float, int]:
        i = skip_ws(i)
        j = i
        while j < n and (text[j].isdigit() or text[j] in "+-.eE"):
            j += 1
        if j == i:
            raise WktError("expected coordinate", i)
        try:
            return float(text[i:j]), j
        except ValueError:
            raise WktError(f"non-numeric coordinate {text[i:j]!r}", i) from None

    def read_point_seq(i: int) -> tuple[list[tuple[float, float]], int]:
        start = i
        i = expect(i, "(")
        points = []
        while True:
            x, i = read_number(i)
            y, i = read_number(i)
            if not (math.isfinite(x) and math.isfinite(y)):
                raise WktError("non-finite coordinate", start)
            points.append((x, y))
            i = skip_ws(i)
            if i < n and text[i] == ",":
                i += 1
                continue
            break
        i = expect(i, ")")
        return points, i

    while True:
        pos = skip_ws(pos)
        if pos >= n:
            break
        start = pos
        j = pos
        while j < n and (text[j].isalpha() or text[j] == "_"):
            j += 1
        keyword = text[pos:j].upper()
        pos = j
        if keyword == "POINT":
            pts, pos = read_point_seq(pos)
            if len(pts) != 1:
                raise WktError("POINT must contain exactly one coordinate pair", start)
            polylines.append(pts)
        elif keyword == "LINESTRING":
            pts, pos = read_point_seq(pos)
            if len(pts) < 2:
                raise WktError("LINESTRING has fewer than 2 points", start)
            polylines.append(pts)
        elif keyword == "MULTILINESTRING":
            pos = expect(pos, "(")
            while True:
                pts, pos = read_point_seq(pos)
                if len(pts) < 2:
                    raise WktError("MULTILINESTRING part has fewer than 2 points", start)
                polylines.append(pts)
                pos = skip_ws(pos)
                if pos < n and text[pos] == ",":
                    pos += 1
                    continue
                break
            pos = expect(pos, ")")
        else:
            raise WktError(f"unknown record type {text[start:j] or text[start:start + 10]!r}", start)
    return polylines


# ---------------------------------------------------------------------------
# Graph construction


class RoadGraph:
    """Undirected weighted road graph with insertion-ordered vertex ids."""

    def __init__(self, vertices: list[tuple[float, float]], edges: list[tuple[int, int]]):
        self.vertices = vertices
        self.edges = sorted(edges)  # (u, v) with u < v, deduplicated by builder
        self.adjacency: list[list[tuple[int, float]]] = [[] for _ in vertices]
        self.edge_length: dict[tuple[int, int], float] = {}
        for u, v in self.edges:
            length = _dist(vertices[u], vertices[v])
            self.edge_length[(u, v)] = length
            self.adjacency[u].append((v, length))
            self.adjacency[v].append((u, length))
        for nbrs in self.adjacency:
            nbrs.sort()

    @property
    def vertex_count(self) -> int:
        return len(self.vertices)

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    def components(self) -> list[list[int]]:
        """Connected components as sorted vertex-id lists, largest first;
        ties broken by smallest contained id."""
        seen = [False] * len(self.vertices)
        comps = []
        for start in range(len(self.vertices)):
            if seen[start]:
                continue
            comp = []
            stack = [start]
            seen[start] = True
            while stack:
                u = stack.pop()
                comp.append(u)
                for v, _ in self.adjacency[u]:
                    if not seen[v]:
                        seen[v] = True
                        stack.append(v)
            comps.append(sorted(comp))
        comps.sort(key=lambda c: (-len(c), c[0]))
        return comps

    def is_connected(self) -> bool:
        return len(self.components()) <= 1


def _dist(a: tuple[float, float], b: tuple[float, float]) -> float:
    dx = a[0] - b[0]
    dy = a[1] - b[1]
    return math.sqrt(dx * dx + dy * dy)


class _SnapIndex:
    """Uniform-grid index mapping points to existing vertex ids within a
    snap tolerance.  First-registered vertex wins a merge."""

    def __init__(self, tolerance: float):
        self.tol = tolerance
        self.cell = max(tolerance, 1e-9)
        self.buckets: dict[tuple[int, int], list[int]] = {}
        self.coords: list[tuple[float, float]] = []

    def _key(self, p: tuple[float, float]) -> tuple[int, int]:
        return (int(math.floor(p[0] / self.cell)), int(math.floor(p[1] / self.cell)))

    def find(self, p: tuple[float, float]) -> int | None:
        cx, cy = self._key(p)
        best = None
        for gx in (cx - 1, cx, cx + 1):
            for gy in (cy - 1, cy, cy + 1):
                for vid in self.buckets.get((gx, gy), ()):
                    if _dist(p, self.coords[vid]) <= self.tol:
                        if best is None or vid < best:
                            best = vid
        return best

    def add(self, p: tuple[float, float]) -> int:
        vid = len(self.coords)
        self.coords.append(p)
        self.buckets.setdefault(self._key(p), []).append(vid)
        return vid


def build_graph(
    polylines: list[list[tuple[float, float]]], snap_tolerance_m: float = 1.0
) -> RoadGraph:
    """Build a road graph from polylines, merging points within the snap
    tolerance and discarding zero-length edges and duplicates."""
    if not polylines:
        raise MapError("cannot build a road graph from empty input")
    index = _SnapIndex(snap_tolerance_m)
    edges: set[tuple[int, int]] = set()
    for line in polylines:
        prev: int | None = None
        for p in line:
            vid = index.find(p)
            if vid is None:
                vid = index.add(p)
            if prev is not None and prev != vid:
                edges.add((min(prev, vid), max(prev, vid)))
            prev = vid
    return RoadGraph(index.coords, sorted(edges))


# ---------------------------------------------------------------------------
# Connectivity repair


@dataclass
class RepairReport:
    mode: str
    component_sizes: list[int] = field(default_factory=list)
    dropped_vertices: int = 0
    dropped_edges: int = 0
    bridges_added: list[tuple[int, int]] = field(default_factory=list)

    @property
    def changed(self) -> bool:
        return self.dropped_vertices > 0 or bool(self.bridges_added)

    def summary(self) -> str:
        if not self.changed:
            return "map already connected"
        if self.mode == "drop":
            return (
                f"dropped {self.dropped_vertices} vertices / {self.dropped_edges} edges "
                f"from {len(self.component_sizes) - 1} minor components"
            )
        return f"bridged {len(self.bridges_added)} minor components into the main one"


def repair_connectivity(graph: RoadGraph, mode: str = "drop") -> tuple[RoadGraph, RepairReport]:
    """Make the graph a single connected component.

    mode="drop" keeps only the largest component; mode="bridge" connects
    each minor component to the main one with a new edge between the
    nearest vertex pair.  Vertex ids are compacted in drop mode.
    """
    if mode not in ("drop", "bridge"):
        raise ValueError(f"unknown repair mode {mode!r}")
    comps = graph.components()
    report = RepairReport(mode=mode, component_sizes=[len(c) for c in comps])
    if len(comps) <= 1:
        return graph, report

    if mode == "drop":
        keep = set(comps[0])
        remap = {}
        vertices = []
        for old_id in sorted(keep):
            remap[old_id] = len(vertices)
            vertices.append(graph.vertices[old_id])
        edges = [(remap[u], remap[v]) for u, v in graph.edges if u in keep and v in keep]
        report.dropped_vertices = graph.vertex_count - len(vertices)
        report.dropped_edges = graph.edge_count - len(edges)
        return RoadGraph(vertices, edges), report

    main = comps[0]
    edges = list(graph.edges)
    for minor in comps[1:]:
        best = None
        for u in main:
            for v in minor:
                d = _dist(graph.vertices[u], graph.vertices[v])
                if best is None or d < best[0]:
                    best = (d, u, v)
        _, u, v = best
        edges.append((min(u, v), max(u, v)))
        report.bridges_added.append((min(u, v), max(u, v)))
        main = main + minor  # subsequent minors may attach via this one too
    return RoadGraph(graph.vertices, edges), report


# ---------------------------------------------------------------------------
# Shortest paths


def _dijkstra(adjacency: list[list[tuple[int, float]]], source: int) -> list[float]:
    dist = [math.inf] * len(adjacency)
    dist[source] = 0.0
    heap = [(0.0, source)]
    while heap:
        d, u = heappop(heap)
        if d > dist[u]:
            continue
        for v, w in adjacency[u]:
            nd = d + w
            if nd < dist[v]:
                dist[v] = nd
                heappush(heap, (nd, v))
    return dist


def _greedy_walk(
    adjacency: list[list[tuple[int, float]]], start: int, target: int, dist_to_target: list[float]
) -> list[int]:
    """Walk the shortest-path DAG from start to target, always taking the
    smallest-id neighbour that stays on a shortest path.  This yields the
    lexicographically smallest vertex-id sequence among shortest paths."""
    path = [start]
    current = start
    limit = len(adjacency) + 1
    while current != target:
        chosen = None
        for v, w in adjacency[current]:  # adjacency sorted by id
            if w + dist_to_target[v] <= dist_to_target[current] + _PATH_EPS:
                chosen = v
                break
        if chosen is None or len(path) > limit:
            raise MapError(f"no path from vertex {start} to {target}")
        path.append(chosen)
        current = chosen
    return path


def shortest_path(graph: RoadGraph, from_vertex: int, to_vertex: int) -> list[int]:
    """Minimal-length path as a vertex-id list; among equal-length paths the
    lexicographically smallest id sequence is returned."""
    for v in (from_vertex, to_vertex):
        if not 0 <= v < graph.vertex_count:
            raise MapError(f"vertex {v} not in graph")
    if from_vertex == to_vertex:
        return [from_vertex]
    dist = _dijkstra(graph.adjacency, to_vertex)
    if math.isinf(dist[from_vertex]):
        raise MapError(f"no path from vertex {from_vertex} to {to_vertex}")
    return _greedy_walk(graph.adjacency, from_vertex, to_vertex, dist)


def path_length(graph: RoadGraph, path: list[int]) -> float:
    total = 0.0
    for u, v in zip(path, path[1:]):
        total += graph.edge_length[(min(u, v), max(u, v))]
    return total


def dump_wkt(graph: RoadGraph) -> str:
    """Serialize as one LINESTRING per edge, sorted, bit-reproducible."""
    lines = []
    for u, v in graph.edges:
        (x1, y1), (x2, y2) = graph.vertices[u], graph.vertices[v]
        lines.append(f"LINESTRING ({x1!r} {y1!r}, {x2!r} {y2!r})")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Group overlays


class GroupOverlay:
    """A connected subgraph of the base graph that one node group moves on."""

    def __init__(self, base: RoadGraph, vertices: list[int], edges: list[tuple[int, int]]):
        self.base = base
        self.vertices = sorted(vertices)  # base-graph vertex ids
        self.edges = sorted(edges)
        self.adjacency: dict[int, list[tuple[int, float]]] = {v: [] for v in self.vertices}
        for u, v in self.edges:
            length = base.edge_length[(u, v)]
            self.adjacency[u].append((v, length))
            self.adjacency[v].append((u, length))
        for nbrs in self.adjacency.values():
            nbrs.sort()

    @property
    def vertex_count(self) -> int:
        return len(self.vertices)

    def position(self, vertex: int) -> tuple[float, float]:
        return self.base.vertices[vertex]

    def is_connected(self) -> bool:
        if not self.vertices:
            return False
        seen = {self.vertices[0]}
        stack = [self.vertices[0]]
        while stack:
            u = stack.pop()
            for v, _ in self.adjacency[u]:
                if v not in seen:
                    seen.add(v)
                    stack.append(v)
        return len(seen) == len(self.vertices)


def full_overlay(base: RoadGraph) -> GroupOverlay:
    return GroupOverlay(base, list(range(base.vertex_count)), list(base.edges))


def snap_overlay(
    base: RoadGraph,
    polylines: list[list[tuple[float, float]]],
    snap_tolerance_m: float = 1.0,
    name: str = "overlay",
) -> GroupOverlay:
    """Snap overlay polylines onto base-graph vertices and edges.

    Every overlay point must land on a base vertex within the tolerance and
    every overlay segment must correspond to an existing base edge; this
    keeps overlays strict subgraphs so distances match the base map.
    """
    index = _SnapIndex(snap_tolerance_m)
    for p in base.vertices:
        index.add(p)
    vertices: set[int] = set()
    edges: set[tuple[int, int]] = set()
    for line in polylines:
        prev = None
        for p in line:
            vid = index.find(p)
            if vid is None:
                raise MapError(
                    f"{name}: point ({p[0]}, {p[1]}) is more than "
                    f"{snap_tolerance_m} m from any base-map vertex"
                )
            vertices.add(vid)
            if prev is not None and prev != vid:
                key = (min(prev, vid), max(prev, vid))
                if key not in base.edge_length:
                    raise MapError(
                        f"{name}: segment between base vertices {key[0]} and {key[1]} "
                        "does not exist in the base map"
                    )
                edges.add(key)
            prev = vid
    if not vertices:
        raise MapError(f"{name}: overlay is empty")
    overlay = GroupOverlay(base, sorted(vertices), sorted(edges))
    if not overlay.is_connected():
        raise MapError(f"{name}: overlay is not connected")
    return overlay


class RoutePlanner:
    """Shortest-path route queries on an overlay with a lazy per-target
    distance cache (distances to a target serve every source)."""

    def __init__(self, overlay: GroupOverlay):
        self.overlay = overlay
        # Dense adjacency over local indices for Dijkstra speed.
        self._local = {v: i for i, v in enumerate(overlay.vertices)}
        self._adj: list[list[tuple[int, float]]] = [
            [(self._local[v], w) for v, w in overlay.adjacency[u]] for u in overlay.vertices
        ]
        self._dist_cache: dict[int, list[float]] = {}

    def _dist_to(self, target_local: int) -> list[float]:
        cached = self._dist_cache.get(target_local)
        if cached is None:
            cached = _dijkstra(self._adj, target_local)
            self._dist_cache[target_local] = cached
        return cached

    def route(self, from_vertex: int, to_vertex: int) -> list[int]:
        """Vertex-id route (base ids) from from_vertex to to_vertex."""
        s = self._local[from_vertex]
        t = self._local[to_vertex]
        if s == t:
            return [to_vertex]
        dist = self._dist_to(t)
        if math.isinf(dist[s]):
            raise MapError(f"no overlay path from vertex {from_vertex} to {to_vertex}")
        local_path = _greedy_walk(self._adj, s, t, dist)
        return [self.overlay.vertices[i] for i in local_path]


def check_bounds(
    polylines: list[list[tuple[float, float]]], width: float, height: float, name: str = "map"
) -> None:
    """Reject coordinates outside the declared world rectangle; clamping
    would silently distort distances and contact geometry."""
    for line in polylines:
        for x, y in line:
            if not (0.0 <= x <= width and 0.0 <= y <= height):
                raise MapError(
                    f"{name}: coordinate ({x}, {y}) lies outside the declared "
                    f"world bounds [0, {width}] x [0, {height}]"
                )
