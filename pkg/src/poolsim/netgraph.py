"""Road network loading, coordinate snapping, and shortest-path routing.

Networks are directed weighted graphs (intersections and road links, lengths
in meters). Undirected roads are encoded as two directed edges in the input
files.
"""

from __future__ import annotations

import csv
import heapq
import math
import threading
from collections import OrderedDict
from dataclasses import dataclass, field


EARTH_RADIUS_M = 6_371_000.0


class NetworkError(Exception):
    """Raised on malformed network files or invalid routing queries."""


def haversine_m(lon1, lat1, lon2, lat2):
    """Great-circle distance in meters between two lon/lat points (degrees)."""
    phi1, phi2 = math.radians(lat1), math.radians(lat2)
    dphi = phi2 - phi1
    dlam = math.radians(lon2 - lon1)
    a = math.sin(dphi / 2.0) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlam / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_M * math.asin(math.sqrt(a))


@dataclass(frozen=True)
class PathResult:
    """A shortest route: total length in meters plus the node sequence."""

    distance: float
    node_sequence: tuple

    def __post_init__(self):
        if not self.node_sequence:
            raise ValueError("empty node sequence")


class RoadNetwork:
    """Immutable directed road graph.

    Parameters
    ----------
    nodes : iterable of (node_id, lon, lat)
    edges : iterable of (from_id, to_id, length_m), directed, length_m > 0

    Routing results are memoized per source node (full Dijkstra tree) with an
    LRU budget, since batch matching re-queries the same origins heavily.
    """

    def __init__(self, nodes, edges, cache_size=4096):
        self.coords = {}
        for nid, lon, lat in nodes:
            if nid in self.coords:
                raise NetworkError(f"duplicate node id {nid!r}")
            self.coords[nid] = (float(lon), float(lat))
        self.adj = {nid: [] for nid in self.coords}
        self.edges = []
        for u, v, length in edges:
            if u not in self.coords:
                raise NetworkError(f"edge references undefined node {u!r}")
            if v not in self.coords:
                raise NetworkError(f"edge references undefined node {v!r}")
            length = float(length)
            if length <= 0:
                raise NetworkError(f"non-positive edge length {length} on {u!r}->{v!r}")
            self.adj[u].append((v, length))
            self.edges.append((u, v, length))
        for nid in self.adj:
            self.adj[nid].sort(key=lambda e: (str(e[0]), e[1]))
        self._cache = OrderedDict()
        self._cache_size = cache_size
        self._lock = threading.Lock()

    @property
    def node_ids(self):
        return sorted(self.coords, key=str)

    def __len__(self):
        return len(self.coords)

    def snap_to_node(self, lon, lat):
        """Nearest node to a lon/lat coordinate by great-circle distance.

        Ties break deterministically toward the smallest node id.
        """
        if not self.coords:
            raise NetworkError("cannot snap on an empty network")
        best, best_d = None, math.inf
        for nid in self.node_ids:
            nlon, nlat = self.coords[nid]
            d = haversine_m(lon, lat, nlon, nlat)
            if d < best_d - 1e-9:
                best, best_d = nid, d
        return best

    def _dijkstra_tree(self, source):
        """(dist, parent) maps from source; ties resolved by smaller parent id."""
        with self._lock:
            cached = self._cache.get(source)
            if cached is not None:
                self._cache.move_to_end(source)
                return cached
        dist = {source: 0.0}
        parent = {source: None}
        heap = [(0.0, str(source), source)]
        done = set()
        while heap:
            d, _, u = heapq.heappop(heap)
            if u in done:
                continue
            done.add(u)
            for v, w in self.adj[u]:
                nd = d + w
                old = dist.get(v)
                if old is None or nd < old - 1e-12 or (
                    abs(nd - old) <= 1e-12 and str(u) < str(parent[v])
                ):
                    dist[v] = nd
                    parent[v] = u
                    heapq.heappush(heap, (nd, str(v), v))
        tree = (dist, parent)
        with self._lock:
            self._cache[source] = tree
            if len(self._cache) > self._cache_size:
                self._cache.popitem(last=False)
        return tree

    def distance(self, source, target):
        """Shortest-path distance in meters, or None when unreachable."""
        if source not in self.coords:
            raise NetworkError(f"unknown node {source!r}")
        if target not in self.coords:
            raise NetworkError(f"unknown node {target!r}")
        dist, _ = self._dijkstra_tree(source)
        return dist.get(target)

    def shortest_path(self, source, target):
        """Shortest route from source to target, or None when unreachable."""
        if source not in self.coords:
            raise NetworkError(f"unknown node {source!r}")
        if target not in self.coords:
            raise NetworkError(f"unknown node {target!r}")
        dist, parent = self._dijkstra_tree(source)
        if target not in dist:
            return None
        seq = [target]
        while parent[seq[-1]] is not None:
            seq.append(parent[seq[-1]])
        seq.reverse()
        return PathResult(distance=dist[target], node_sequence=tuple(seq))


def _read_csv(path, expected_header):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise NetworkError(f"{path}: empty file") from None
        if [h.strip() for h in header] != expected_header:
            raise NetworkError(f"{path}: expected header {expected_header}, got {header}")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(expected_header):
                raise NetworkError(f"{path}:{lineno}: expected {len(expected_header)} fields")
            yield lineno, row


def load_network(nodes_path, edges_path, cache_size=4096):
    """Load a RoadNetwork from a nodes.csv / edges.csv pair.

    nodes.csv: ``node_id,lon,lat``; edges.csv: ``from_id,to_id,length_m``.
    Node ids are kept as strings when non-numeric, ints otherwise.
    """
    def parse_id(text):
        text = text.strip()
        try:
            return int(text)
        except ValueError:
            return text

    nodes = []
    for lineno, row in _read_csv(nodes_path, ["node_id", "lon", "lat"]):
        try:
            nodes.append((parse_id(row[0]), float(row[1]), float(row[2])))
        except ValueError as exc:
            raise NetworkError(f"{nodes_path}:{lineno}: {exc}") from None
    edges = []
    for lineno, row in _read_csv(edges_path, ["from_id", "to_id", "length_m"]):
        try:
            edges.append((parse_id(row[0]), parse_id(row[1]), float(row[2])))
        except ValueError as exc:
            raise NetworkError(f"{edges_path}:{lineno}: {exc}") from None
    return RoadNetwork(nodes, edges, cache_size=cache_size)


def position_along_route(route: PathResult, network: RoadNetwork, elapsed, speed):
    """Position after traveling along a route at constant speed.

    Returns ``(current_node, meters_traveled)`` where current_node is the
    last node passed. Saturates at the end of the route.
    """
    if elapsed < 0:
        raise ValueError("elapsed must be >= 0")
    if speed <= 0:
        raise ValueError("speed must be > 0")
    traveled = min(elapsed * speed, route.distance)
    seq = route.node_sequence
    if len(seq) == 1:
        return seq[0], 0.0
    cum = 0.0
    current = seq[0]
    for a, b in zip(seq, seq[1:]):
        leg = _edge_length(network, a, b)
        if cum + leg > traveled + 1e-9:
            break
        cum += leg
        current = b
    return current, traveled


def _edge_length(network, a, b):
    for v, w in network.adj[a]:
        if v == b:
            return w
    raise NetworkError(f"no edge {a!r}->{b!r}")
