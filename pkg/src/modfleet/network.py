"""Directed traffic network, minimum-travel-time routing and route precomputation."""

from __future__ import annotations

import hashlib
import heapq
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

PEDESTRIAN_SPEED_MPS = 1.4


class GraphError(ValueError):
    """Raised for malformed graph documents or invalid routing queries."""


@dataclass(frozen=True)
class Link:
    src: int
    dst: int
    length_m: float
    speed_mps: float
    walkable: bool = True

    def __post_init__(self):
        if not self.length_m > 0:
            raise GraphError(f"link {self.src}->{self.dst}: length must be positive, got {self.length_m}")
        if not self.speed_mps > 0:
            raise GraphError(f"link {self.src}->{self.dst}: speed must be positive, got {self.speed_mps}")

    @property
    def time_s(self) -> float:
        return self.length_m / self.speed_mps


@dataclass(frozen=True)
class Route:
    links: tuple[Link, ...] = ()

    @property
    def total_time_s(self) -> float:
        return travel_time(self)

    @property
    def total_distance_m(self) -> float:
        return travel_distance(self)

    @property
    def nodes(self) -> tuple[int, ...]:
        if not self.links:
            return ()
        return (self.links[0].src,) + tuple(l.dst for l in self.links)


def travel_time(route: Route) -> float:
    return sum(l.length_m / l.speed_mps for l in route.links)


def travel_distance(route: Route) -> float:
    return sum(l.length_m for l in route.links)


@dataclass
class NetworkGraph:
    """Directed graph of nodes and links.

    Node ids are opaque integers. ``index`` maps each id to a dense row index
    used by the time/distance matrices that ``precompute_routes`` fills in.
    """

    nodes: list[int]
    links: list[Link]
    coords: dict[int, tuple[float, float]] = field(default_factory=dict)
    pedestrian_speed_mps: float = PEDESTRIAN_SPEED_MPS
    route_table: dict[tuple[int, int], Route] = field(default_factory=dict)
    time_matrix: np.ndarray | None = None
    dist_matrix: np.ndarray | None = None
    walk_matrix: np.ndarray | None = None

    def __post_init__(self):
        if len(set(self.nodes)) != len(self.nodes):
            raise GraphError("duplicate node ids")
        self.index = {n: i for i, n in enumerate(self.nodes)}
        for l in self.links:
            if l.src not in self.index or l.dst not in self.index:
                raise GraphError(f"link {l.src}->{l.dst} references an unknown node")
        self._out: dict[int, list[Link]] = {n: [] for n in self.nodes}
        for l in self.links:
            self._out[l.src].append(l)
        self._link_by_pair: dict[tuple[int, int], Link] = {}
        for l in self.links:
            best = self._link_by_pair.get((l.src, l.dst))
            if best is None or l.time_s < best.time_s:
                self._link_by_pair[(l.src, l.dst)] = l

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_links(self) -> int:
        return len(self.links)

    def out_links(self, node: int) -> list[Link]:
        return self._out[node]

    def link(self, src: int, dst: int) -> Link:
        return self._link_by_pair[(src, dst)]

    def has_routes(self) -> bool:
        return self.time_matrix is not None

    def content_hash(self) -> str:
        """Stable hash of the routing-relevant content (coordinates excluded)."""
        h = hashlib.sha256()
        h.update(json.dumps(self.nodes).encode())
        for l in self.links:
            h.update(f"{l.src},{l.dst},{l.length_m!r},{l.speed_mps!r},{int(l.walkable)};".encode())
        h.update(repr(self.pedestrian_speed_mps).encode())
        return h.hexdigest()[:16]

    def time(self, origin: int, dest: int) -> float:
        return float(self.time_matrix[self.index[origin], self.index[dest]])

    def distance(self, origin: int, dest: int) -> float:
        return float(self.dist_matrix[self.index[origin], self.index[dest]])


def load_graph(source, pedestrian_speed_mps: float = PEDESTRIAN_SPEED_MPS) -> NetworkGraph:
    """Load a graph from a path, a JSON string, or an already parsed dict."""
    if isinstance(source, dict):
        doc = source
    elif isinstance(source, Path) or (isinstance(source, str) and not source.lstrip().startswith("{")):
        doc = json.loads(Path(source).read_text())
    else:
        try:
            doc = json.loads(source)
        except json.JSONDecodeError as e:
            raise GraphError(f"malformed graph document: {e}") from e
    if not isinstance(doc, dict) or "nodes" not in doc or "links" not in doc:
        raise GraphError("graph document needs 'nodes' and 'links'")
    try:
        nodes = [int(n["id"]) for n in doc["nodes"]]
        coords = {int(n["id"]): (float(n.get("x", 0.0)), float(n.get("y", 0.0))) for n in doc["nodes"]}
        links = [
            Link(
                int(l["from"]),
                int(l["to"]),
                float(l["length_m"]),
                float(l["speed_mps"]),
                bool(l.get("walkable", True)),
            )
            for l in doc["links"]
        ]
    except (KeyError, TypeError, ValueError) as e:
        if isinstance(e, GraphError):
            raise
        raise GraphError(f"malformed graph document: {e!r}") from e
    return NetworkGraph(nodes, links, coords, pedestrian_speed_mps=pedestrian_speed_mps)


def graph_to_dict(graph: NetworkGraph) -> dict:
    return {
        "nodes": [
            {"id": n, "x": graph.coords.get(n, (0.0, 0.0))[0], "y": graph.coords.get(n, (0.0, 0.0))[1]}
            for n in graph.nodes
        ],
        "links": [
            {"from": l.src, "to": l.dst, "length_m": l.length_m, "speed_mps": l.speed_mps, "walkable": l.walkable}
            for l in graph.links
        ],
    }


def _single_source(graph: NetworkGraph, origin: int, speed=None, walk_only=False):
    """Label-setting search from ``origin``.

    Labels are ``(time, n_links, node_sequence)`` so equal-time paths resolve to
    fewer links, then to the lexicographically smallest node sequence.
    Returns ``{dest: (time, links)}``.
    """
    best: dict[int, tuple] = {}
    heap = [(0.0, 0, (origin,), 0, ())]
    pushed = 0  # parallel links share a node sequence; push order settles those ties
    while heap:
        t, nl, seq, _, links = heapq.heappop(heap)
        node = seq[-1]
        if node in best:
            continue
        best[node] = (t, links)
        for l in graph.out_links(node):
            if walk_only and not l.walkable:
                continue
            if l.dst in best:
                continue
            dt = l.length_m / (speed if speed is not None else l.speed_mps)
            pushed += 1
            heapq.heappush(heap, (_snap(t + dt), nl + 1, seq + (l.dst,), pushed, links + (l,)))
    return best


def _snap(t: float) -> float:
    # absorbs float noise so that mathematically equal path times compare equal
    return round(t, 9)


def shortest_route(graph: NetworkGraph, origin: int, dest: int) -> Route:
    if origin not in graph.index or dest not in graph.index:
        raise GraphError(f"unknown node in query {origin}->{dest}")
    if origin == dest:
        return Route()
    cached = graph.route_table.get((origin, dest))
    if cached is not None:
        return cached
    found = _single_source(graph, origin).get(dest)
    if found is None:
        raise GraphError(f"node {dest} is unreachable from {origin}")
    return Route(found[1])


def precompute_routes(graph: NetworkGraph) -> NetworkGraph:
    """Fill the route table and the dense time/distance/walk matrices in place."""
    if graph.time_matrix is not None:
        return graph
    n = graph.n_nodes
    T = np.full((n, n), np.inf)
    D = np.full((n, n), np.inf)
    W = np.full((n, n), np.inf)
    table = {}
    for origin in graph.nodes:
        i = graph.index[origin]
        for dest, (_, links) in _single_source(graph, origin).items():
            j = graph.index[dest]
            route = Route(links)
            if dest != origin:
                table[(origin, dest)] = route
            T[i, j] = travel_time(route)
            D[i, j] = travel_distance(route)
        for dest, (t, _) in _single_source(graph, origin, speed=graph.pedestrian_speed_mps, walk_only=True).items():
            W[i, graph.index[dest]] = t
        T[i, i] = D[i, i] = W[i, i] = 0.0
    graph.route_table = table
    graph.time_matrix, graph.dist_matrix, graph.walk_matrix = T, D, W
    return graph


def walk_time(graph: NetworkGraph, origin: int, dest: int) -> float:
    if origin not in graph.index or dest not in graph.index:
        raise GraphError(f"unknown node in query {origin}->{dest}")
    if graph.walk_matrix is not None:
        t = float(graph.walk_matrix[graph.index[origin], graph.index[dest]])
    else:
        found = _single_source(graph, origin, speed=graph.pedestrian_speed_mps, walk_only=True).get(dest)
        t = np.inf if found is None else sum(l.length_m for l in found[1]) / graph.pedestrian_speed_mps
    if not np.isfinite(t):
        raise GraphError(f"node {dest} is not reachable on foot from {origin}")
    return t


def is_strongly_connected(graph: NetworkGraph) -> bool:
    precompute_routes(graph)
    return bool(np.isfinite(graph.time_matrix).all())


def next_hop(graph: NetworkGraph, origin: int, dest: int) -> Link:
    """First link of the stored route from ``origin`` to ``dest``."""
    return graph.route_table[(origin, dest)].links[0]


def bundled_graph_path() -> Path:
    return Path(__file__).parent / "data" / "campus.json"


def load_bundled_graph() -> NetworkGraph:
    return precompute_routes(load_graph(bundled_graph_path()))
