"""Undirected communication graphs, their Laplacians and connectivity bounds."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from consensus_flow import constants as C
from consensus_flow.errors import BadParam, Disconnected, GraphFormatError
from consensus_flow.linalg import sym_eigen

TOPOLOGIES = ("path", "cycle", "complete", "star", "random_connected")


@dataclass(frozen=True)
class NetworkGraph:
    """Simple undirected graph on vertices ``0 .. vertex_count - 1``.

    Edges are stored normalized as ``(i, j)`` with ``i < j``, sorted.
    """

    vertex_count: int
    edges: tuple[tuple[int, int], ...] = ()

    def __post_init__(self):
        if self.vertex_count < 0:
            raise BadParam("vertex_count must be non-negative")
        seen = set()
        for i, j in self.edges:
            if i == j:
                raise GraphFormatError(f"self-loop at vertex {i}")
            if not (0 <= i < self.vertex_count and 0 <= j < self.vertex_count):
                raise GraphFormatError(f"edge ({i}, {j}) out of range for {self.vertex_count} vertices")
            key = (min(i, j), max(i, j))
            if key in seen:
                raise GraphFormatError(f"duplicate edge {key}")
            seen.add(key)
        object.__setattr__(self, "edges", tuple(sorted(seen)))

    @classmethod
    def from_edges(cls, vertex_count: int, edges: Iterable[tuple[int, int]]) -> "NetworkGraph":
        return cls(vertex_count, tuple((int(i), int(j)) for i, j in edges))

    def neighbors(self) -> list[list[int]]:
        """Neighbor lists, each sorted ascending."""
        nbrs: list[list[int]] = [[] for _ in range(self.vertex_count)]
        for i, j in self.edges:
            nbrs[i].append(j)
            nbrs[j].append(i)
        return [sorted(n) for n in nbrs]

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.vertex_count, dtype=int)
        for i, j in self.edges:
            deg[i] += 1
            deg[j] += 1
        return deg


def laplacian(g: NetworkGraph) -> np.ndarray:
    """Combinatorial Laplacian ``D - Adj``."""
    lap = np.zeros((g.vertex_count, g.vertex_count))
    for i, j in g.edges:
        lap[i, j] -= 1.0
        lap[j, i] -= 1.0
        lap[i, i] += 1.0
        lap[j, j] += 1.0
    return lap


def _bfs(nbrs: list[list[int]], source: int) -> list[int]:
    dist = [-1] * len(nbrs)
    dist[source] = 0
    queue = deque([source])
    while queue:
        u = queue.popleft()
        for w in nbrs[u]:
            if dist[w] < 0:
                dist[w] = dist[u] + 1
                queue.append(w)
    return dist


def is_connected(g: NetworkGraph) -> bool:
    if g.vertex_count <= 1:
        return True
    return min(_bfs(g.neighbors(), 0)) >= 0


def diameter(g: NetworkGraph) -> int:
    if not is_connected(g):
        raise Disconnected("graph is disconnected")
    nbrs = g.neighbors()
    return max((max(_bfs(nbrs, s)) for s in range(g.vertex_count)), default=0)


def lambda2(g: NetworkGraph) -> float:
    """Algebraic connectivity: second-smallest Laplacian eigenvalue."""
    if not is_connected(g):
        raise Disconnected("graph is disconnected")
    if g.vertex_count < 2:
        raise BadParam("algebraic connectivity needs at least 2 vertices")
    return float(sym_eigen(laplacian(g)).values[1])


@dataclass
class GraphReport:
    """Connectivity summary.

    ``upper_bound`` is ``n``, the bound that holds for the combinatorial
    Laplacian (attained exactly by complete graphs). ``paper_upper_bound`` is
    ``n / (n - 1)``, kept for reference only; it is a normalized-Laplacian
    bound and is not checked.
    """

    vertex_count: int
    edge_count: int
    connected: bool
    diameter: Optional[int] = None
    lambda2: Optional[float] = None
    lower_bound: Optional[float] = None
    upper_bound: Optional[float] = None
    paper_upper_bound: Optional[float] = None
    lower_bound_holds: Optional[bool] = None
    upper_bound_holds: Optional[bool] = None
    is_complete: bool = False

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def graph_report(g: NetworkGraph) -> GraphReport:
    n = g.vertex_count
    complete = len(g.edges) == n * (n - 1) // 2
    rep = GraphReport(n, len(g.edges), is_connected(g), is_complete=complete)
    if not rep.connected:
        return rep
    rep.diameter = diameter(g)
    if n >= 2:
        l2 = lambda2(g)
        rep.lambda2 = l2
        rep.lower_bound = 4.0 / (n * rep.diameter)
        rep.upper_bound = float(n)
        rep.paper_upper_bound = n / (n - 1)
        rep.lower_bound_holds = rep.lower_bound <= l2 + C.BOUND_TOL
        rep.upper_bound_holds = l2 <= n + C.BOUND_TOL
    return rep


def _prufer_tree(n: int, rng: np.random.Generator) -> list[tuple[int, int]]:
    """Uniform random labelled tree on ``n >= 2`` vertices from a Prüfer code."""
    if n == 2:
        return [(0, 1)]
    code = [int(v) for v in rng.integers(0, n, size=n - 2)]
    degree = [1] * n
    for v in code:
        degree[v] += 1
    edges = []
    for v in code:
        leaf = next(u for u in range(n) if degree[u] == 1)
        edges.append((leaf, v))
        degree[leaf] -= 1
        degree[v] -= 1
    u, w = (x for x in range(n) if degree[x] == 1)
    edges.append((u, w))
    return edges


def generate(topology: str, n: int, seed: int = 0, edge_prob: float = C.RANDOM_EDGE_PROB) -> NetworkGraph:
    """Build a named topology on ``n`` vertices; deterministic in ``seed``."""
    if n < 1:
        raise BadParam("n must be at least 1")
    if topology == "path":
        edges = [(i, i + 1) for i in range(n - 1)]
    elif topology == "cycle":
        edges = [(i, i + 1) for i in range(n - 1)]
        if n >= 3:
            edges.append((0, n - 1))
    elif topology == "complete":
        edges = [(i, j) for i in range(n) for j in range(i + 1, n)]
    elif topology == "star":
        edges = [(0, j) for j in range(1, n)]
    elif topology == "random_connected":
        if n < 2:
            raise BadParam("random_connected needs n >= 2")
        if not 0.0 <= edge_prob <= 1.0:
            raise BadParam("edge probability must lie in [0, 1]")
        rng = np.random.default_rng(seed)
        tree = {(min(i, j), max(i, j)) for i, j in _prufer_tree(n, rng)}
        edges = sorted(tree)
        for i in range(n):
            for j in range(i + 1, n):
                if (i, j) not in tree and rng.random() < edge_prob:
                    edges.append((i, j))
    else:
        raise BadParam(f"unknown topology {topology!r}")
    return NetworkGraph.from_edges(n, edges)


def parse_edge_list(text: str, vertex_count: Optional[int] = None) -> NetworkGraph:
    """Parse ``i j`` lines (0-based, ``#`` comments).

    A ``# vertices N`` comment fixes the vertex count, which otherwise is
    ``vertex_count`` or one more than the largest endpoint.
    """
    edges: list[tuple[int, int]] = []
    seen: set[tuple[int, int]] = set()
    declared = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line, _, comment = raw.partition("#")
        words = comment.split()
        if len(words) == 2 and words[0] == "vertices":
            try:
                declared = int(words[1])
            except ValueError:
                raise GraphFormatError(f"line {lineno}: bad vertex count") from None
        fields = line.split()
        if not fields:
            continue
        if len(fields) != 2:
            raise GraphFormatError(f"line {lineno}: expected 'i j', got {line.strip()!r}")
        try:
            i, j = int(fields[0]), int(fields[1])
        except ValueError:
            raise GraphFormatError(f"line {lineno}: non-integer vertex") from None
        if i < 0 or j < 0:
            raise GraphFormatError(f"line {lineno}: negative vertex")
        key = (min(i, j), max(i, j))
        if key in seen:
            raise GraphFormatError(f"line {lineno}: duplicate edge {key}")
        seen.add(key)
        edges.append(key)
    n = vertex_count if vertex_count is not None else declared
    if n is None:
        n = 1 + max((max(e) for e in edges), default=0)
    return NetworkGraph.from_edges(n, edges)


def format_edge_list(g: NetworkGraph) -> str:
    lines = [f"# vertices {g.vertex_count}"]
    lines += [f"{i} {j}" for i, j in g.edges]
    return "\n".join(lines) + "\n"


def read_edge_list(path, vertex_count: Optional[int] = None) -> NetworkGraph:
    return parse_edge_list(Path(path).read_text(), vertex_count)


def write_edge_list(g: NetworkGraph, path) -> None:
    Path(path).write_text(format_edge_list(g))
