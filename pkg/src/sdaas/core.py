"""Domain types, skyway network ingestion and shortest-path support."""

from __future__ import annotations

import csv
import heapq
import io
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

NODE_HEADER = ("id", "x", "y", "pads")
EDGE_HEADER = ("from", "to", "dist")


class NetworkParseError(ValueError):
    """A network file row could not be parsed."""


class NetworkValidationError(ValueError):
    """A parsed network violates a structural invariant."""


@dataclass(frozen=True)
class Node:
    id: int
    position: Tuple[float, float]
    pads: int = 0

    def __post_init__(self):
        if self.pads < 0:
            raise NetworkValidationError(f"node {self.id}: pads must be >= 0, got {self.pads}")


@dataclass(frozen=True)
class Segment:
    """Undirected line-of-sight flight segment between two rooftops."""

    u: int
    v: int
    dist: float

    def __post_init__(self):
        if self.u == self.v:
            raise NetworkValidationError(f"segment {self.u}-{self.v} is a self loop")
        if not self.dist > 0:
            raise NetworkValidationError(f"segment {self.u}-{self.v}: dist must be > 0")

    def other(self, node_id: int) -> int:
        return self.v if node_id == self.u else self.u


class SkywayNetwork:
    """Graph of recharging-pad nodes joined by distance-weighted segments.

    Construction validates endpoints, duplicate ids and connectivity. The
    object is treated as immutable afterwards; shortest-path tables are
    memoized per target.
    """

    def __init__(self, nodes: Iterable[Node], segments: Iterable[Segment]):
        self.nodes: Dict[int, Node] = {}
        for n in nodes:
            if n.id in self.nodes:
                raise NetworkValidationError(f"duplicate node id {n.id}")
            self.nodes[n.id] = n
        self.segments: Tuple[Segment, ...] = tuple(segments)
        self._adj: Dict[int, Dict[int, float]] = {i: {} for i in self.nodes}
        for s in self.segments:
            for end in (s.u, s.v):
                if end not in self.nodes:
                    raise NetworkValidationError(
                        f"segment {s.u}-{s.v} references unknown node {end}")
            if s.v in self._adj[s.u]:
                raise NetworkValidationError(f"duplicate segment {s.u}-{s.v}")
            self._adj[s.u][s.v] = s.dist
            self._adj[s.v][s.u] = s.dist
        if not self.nodes:
            raise NetworkValidationError("network has no nodes")
        if not self._connected():
            raise NetworkValidationError("network is not connected")
        self._tables: Dict[int, Tuple[Dict[int, float], Dict[int, Optional[int]]]] = {}

    def _connected(self) -> bool:
        start = next(iter(self.nodes))
        seen = {start}
        stack = [start]
        while stack:
            u = stack.pop()
            for v in self._adj[u]:
                if v not in seen:
                    seen.add(v)
                    stack.append(v)
        return len(seen) == len(self.nodes)

    def __len__(self):
        return len(self.nodes)

    def __eq__(self, other):
        if not isinstance(other, SkywayNetwork):
            return NotImplemented
        key = lambda s: (min(s.u, s.v), max(s.u, s.v), s.dist)
        return (self.nodes == other.nodes
                and sorted(map(key, self.segments)) == sorted(map(key, other.segments)))

    def neighbors(self, node_id: int) -> Dict[int, float]:
        """Mapping neighbor id -> segment distance in meters."""
        return self._adj[node_id]

    def edge_dist(self, u: int, v: int) -> float:
        return self._adj[u][v]

    def _dijkstra(self, target: int):
        if target not in self._tables:
            dist: Dict[int, float] = {target: 0.0}
            nxt: Dict[int, Optional[int]] = {target: None}
            done = set()
            heap = [(0.0, target)]
            while heap:
                d, u = heapq.heappop(heap)
                if u in done:
                    continue
                done.add(u)
                for v, w in self._adj[u].items():
                    nd = d + w
                    if v not in dist or nd < dist[v]:
                        dist[v] = nd
                        nxt[v] = u
                        heapq.heappush(heap, (nd, v))
            self._tables[target] = (dist, nxt)
        return self._tables[target]

    def distance(self, u: int, v: int) -> float:
        return self._dijkstra(v)[0][u]

    def shortest_path(self, u: int, v: int) -> List[int]:
        """Node ids of a shortest u -> v path, endpoints included."""
        _, nxt = self._dijkstra(v)
        path = [u]
        while path[-1] != v:
            path.append(nxt[path[-1]])
        return path


def shortest_path_table(net: SkywayNetwork, target: int) -> Dict[int, float]:
    """Exact shortest-path distance in meters from every node to `target`."""
    if target not in net.nodes:
        raise KeyError(f"unknown node {target}")
    return dict(net._dijkstra(target)[0])


# -- network files -----------------------------------------------------------

def _rows(text: str):
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        yield lineno, next(csv.reader([stripped]))


def _parse(node_rows, edge_rows) -> SkywayNetwork:
    nodes = []
    for lineno, row in node_rows:
        if len(row) != 4:
            raise NetworkParseError(f"line {lineno}: expected id,x,y,pads, got {row}")
        try:
            nodes.append(Node(int(row[0]), (float(row[1]), float(row[2])), int(row[3])))
        except ValueError as exc:
            if isinstance(exc, NetworkValidationError):
                raise
            raise NetworkParseError(f"line {lineno}: {exc}") from None
    pos = {n.id: n.position for n in nodes}
    segments = []
    for lineno, row in edge_rows:
        if len(row) not in (2, 3):
            raise NetworkParseError(f"line {lineno}: expected from,to[,dist], got {row}")
        try:
            u, v = int(row[0]), int(row[1])
            raw = row[2].strip() if len(row) == 3 else ""
            d = float(raw) if raw else None
        except ValueError as exc:
            raise NetworkParseError(f"line {lineno}: {exc}") from None
        if d is None:
            if u not in pos or v not in pos:
                raise NetworkValidationError(f"segment {u}-{v} references unknown node")
            d = math.dist(pos[u], pos[v])
        segments.append(Segment(u, v, d))
    return SkywayNetwork(nodes, segments)


def _split_sections(text: str):
    node_rows, edge_rows, current = [], [], None
    for lineno, row in _rows(text):
        header = tuple(c.strip().lower() for c in row)
        if header == NODE_HEADER:
            current = node_rows
        elif header in (EDGE_HEADER, EDGE_HEADER[:2]):
            current = edge_rows
        elif current is None:
            raise NetworkParseError(f"line {lineno}: data before any section header")
        else:
            current.append((lineno, row))
    return node_rows, edge_rows


def _read_section(path: Path, header: Sequence[str]):
    rows = list(_rows(path.read_text(encoding="utf-8")))
    if not rows or tuple(c.strip().lower() for c in rows[0][1])[:len(header)] != tuple(header):
        raise NetworkParseError(f"{path}: missing header {','.join(header)}")
    return rows[1:]


def load_network(path, edges_path=None) -> SkywayNetwork:
    """Load a network from a `nodes.csv`/`edges.csv` pair or a sectioned file.

    `path` may be a directory holding both files, a nodes file paired with
    `edges_path`, or a single file containing an ``id,x,y,pads`` section
    followed by a ``from,to[,dist]`` section. Missing edge distances are
    filled with the Euclidean distance between endpoints.
    """
    path = Path(path)
    if path.is_dir():
        return load_network(path / "nodes.csv", path / "edges.csv")
    if edges_path is not None:
        return _parse(_read_section(path, NODE_HEADER),
                      _read_section(Path(edges_path), EDGE_HEADER[:2]))
    return _parse(*_split_sections(path.read_text(encoding="utf-8")))


def network_to_csv(net: SkywayNetwork) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(NODE_HEADER)
    for n in sorted(net.nodes.values(), key=lambda n: n.id):
        w.writerow([n.id, repr(float(n.position[0])), repr(float(n.position[1])), n.pads])
    w.writerow(EDGE_HEADER)
    for s in net.segments:
        w.writerow([s.u, s.v, repr(float(s.dist))])
    return buf.getvalue()


def save_network(net: SkywayNetwork, path) -> None:
    """Write `net` as one sectioned CSV file, or as a file pair if `path` is a directory."""
    path = Path(path)
    text = network_to_csv(net)
    if path.is_dir():
        nodes_part, edges_part = text.split(",".join(EDGE_HEADER) + "\n")
        (path / "nodes.csv").write_text(nodes_part, encoding="utf-8")
        (path / "edges.csv").write_text(",".join(EDGE_HEADER) + "\n" + edges_part,
                                        encoding="utf-8")
    else:
        path.write_text(text, encoding="utf-8")


# -- fleet and requests ------------------------------------------------------

@dataclass
class Drone:
    id: int
    battery: float = 1.0
    payload: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.battery <= 1.0:
            raise ValueError(f"drone {self.id}: battery {self.battery} outside [0, 1]")
        if self.payload < 0:
            raise ValueError(f"drone {self.id}: negative payload")


@dataclass
class Swarm:
    """Drones travelling together; a swarm never splits mid-route."""

    drones: List[Drone]
    at_node: int

    def __post_init__(self):
        if not self.drones:
            raise ValueError("a swarm needs at least one drone")

    def __len__(self):
        return len(self.drones)

    @classmethod
    def loaded(cls, packages: Sequence[float], at_node: int) -> "Swarm":
        """Fully charged swarm carrying one package per drone."""
        return cls([Drone(i, 1.0, float(p)) for i, p in enumerate(packages)], at_node)

    def copy(self) -> "Swarm":
        return Swarm([Drone(d.id, d.battery, d.payload) for d in self.drones], self.at_node)


@dataclass(frozen=True)
class TimeWindow:
    st: float
    et: float

    def __post_init__(self):
        if not self.st < self.et:
            raise ValueError(f"window start {self.st} must precede end {self.et}")

    @property
    def width(self) -> float:
        return self.et - self.st


@dataclass(frozen=True)
class Request:
    id: int
    dest: int
    packages: Tuple[float, ...]
    window: TimeWindow

    def __post_init__(self):
        object.__setattr__(self, "packages", tuple(float(p) for p in self.packages))
        if not self.packages:
            raise ValueError(f"request {self.id}: no packages")
        if any(p <= 0 for p in self.packages):
            raise ValueError(f"request {self.id}: package weights must be positive")

    @property
    def swarm_size(self) -> int:
        return len(self.packages)


@dataclass(frozen=True)
class ProviderConfig:
    """Provider-side constants.

    ``fleet_size`` is also the number of packages the provider can carry at
    any instant, since each drone holds a single package.
    """

    fleet_size: int
    source: int
    max_swarm_size: int = 5
    day_length: float = 8 * 3600.0
    max_package_weight: float = 1.4

    def __post_init__(self):
        if self.max_swarm_size < 1:
            raise ValueError("max_swarm_size must be >= 1")
        if self.fleet_size < self.max_swarm_size:
            raise ValueError(
                f"fleet_size {self.fleet_size} smaller than max_swarm_size {self.max_swarm_size}")
        if self.day_length <= 0:
            raise ValueError("day_length must be positive")

    @property
    def capacity(self) -> int:
        return self.fleet_size


def validate_request(req: Request, net: SkywayNetwork, cfg: ProviderConfig) -> List[str]:
    """Violations of the delivery assumptions; an empty list means ok."""
    problems = []
    if req.dest not in net.nodes:
        problems.append(f"destination: node {req.dest} not in network")
    elif req.dest == cfg.source:
        problems.append("destination: equals the source node")
    if len(req.packages) > cfg.max_swarm_size:
        problems.append(
            f"swarm size: {len(req.packages)} packages exceed max {cfg.max_swarm_size}")
    heavy = [p for p in req.packages if p > cfg.max_package_weight]
    if heavy:
        problems.append(f"package weight: {heavy} exceed max {cfg.max_package_weight} kg")
    if req.window.st < 0 or req.window.et > cfg.day_length:
        problems.append(f"window: [{req.window.st}, {req.window.et}] outside the day")
    return problems
