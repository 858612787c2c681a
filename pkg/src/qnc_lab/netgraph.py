"""Random directed network deployments and shortest routes to the gateway.

Nodes are 1..n. Each edge is an i.i.d. uniform draw over the n(n-1) ordered
pairs, so parallel edges can occur; self-loops cannot. Deployments are
regenerated until every node can reach the gateway (the decoder assumes all
packets arrive), which slightly conditions the edge law -- the distribution
audits therefore sample raw draws via draw_edge_pairs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

RETRY_BUDGET = 100


class DeploymentError(RuntimeError):
    """Raised when a connected deployment cannot be generated or routed."""


@dataclass(frozen=True)
class Edge:
    id: int          # 1-based
    tail: int
    head: int
    capacity: int = 1

    def __post_init__(self):
        if self.tail == self.head:
            raise ValueError(f"edge {self.id}: self-loop at node {self.tail}")
        if self.capacity < 1:
            raise ValueError(f"edge {self.id}: capacity must be >= 1")


@dataclass(frozen=True)
class Route:
    """Hop-minimal path to the gateway as a sequence of edges."""

    edges: tuple[Edge, ...]
    hops: int


@dataclass(frozen=True)
class NetworkGraph:
    n: int
    edges: tuple[Edge, ...]
    gateway: int
    route_table: dict[int, Route] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("need at least 2 nodes")
        if not 1 <= self.gateway <= self.n:
            raise ValueError(f"gateway {self.gateway} outside 1..{self.n}")
        ins: list[list[Edge]] = [[] for _ in range(self.n + 1)]
        outs: list[list[Edge]] = [[] for _ in range(self.n + 1)]
        for e in self.edges:
            ins[e.head].append(e)
            outs[e.tail].append(e)
        object.__setattr__(self, "_in", tuple(tuple(v) for v in ins))
        object.__setattr__(self, "_out", tuple(tuple(v) for v in outs))

    def in_edges(self, v: int) -> tuple[Edge, ...]:
        return self._in[v]

    def out_edges(self, v: int) -> tuple[Edge, ...]:
        return self._out[v]

    def hops(self, v: int) -> int:
        return self.route_table[v].hops

    def route(self, v: int) -> Route:
        return self.route_table[v]


def _as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def draw_edge_pairs(n: int, num_edges: int, seed) -> np.ndarray:
    """Raw i.i.d. uniform draws over ordered pairs; shape (num_edges, 2).

    No connectivity conditioning: this is the sampler the distribution
    audits test against the uniform pair law.
    """
    rng = _as_rng(seed)
    tails = rng.integers(1, n + 1, size=num_edges)
    # head drawn uniformly over the n-1 nodes other than the tail
    offs = rng.integers(1, n, size=num_edges)
    heads = (tails - 1 + offs) % n + 1
    return np.column_stack([tails, heads])


def _reaches_gateway(n: int, pairs: np.ndarray, gateway: int) -> bool:
    """BFS on reversed edges from the gateway; True if every node is reached."""
    rev: list[list[int]] = [[] for _ in range(n + 1)]
    for t, h in pairs:
        rev[h].append(t)
    seen = np.zeros(n + 1, dtype=bool)
    seen[gateway] = True
    frontier = [gateway]
    count = 1
    while frontier:
        nxt = []
        for v in frontier:
            for u in rev[v]:
                if not seen[u]:
                    seen[u] = True
                    count += 1
                    nxt.append(u)
        frontier = nxt
    return count == n


def generate_network(n: int, num_edges: int, capacity: int = 1, seed=None) -> NetworkGraph:
    """Random deployment: uniform gateway, i.i.d. uniform edges, connected to gateway.

    Redraws the whole deployment (gateway and edges) up to RETRY_BUDGET times
    until every node has a directed path to the gateway.
    """
    if n < 2:
        raise ValueError("need at least 2 nodes")
    if num_edges < 1:
        raise ValueError("need at least 1 edge")
    rng = _as_rng(seed)
    for _ in range(RETRY_BUDGET):
        gateway = int(rng.integers(1, n + 1))
        pairs = draw_edge_pairs(n, num_edges, rng)
        if _reaches_gateway(n, pairs, gateway):
            edges = tuple(
                Edge(id=i + 1, tail=int(t), head=int(h), capacity=capacity)
                for i, (t, h) in enumerate(pairs)
            )
            g = NetworkGraph(n=n, edges=edges, gateway=gateway)
            return NetworkGraph(n=n, edges=edges, gateway=gateway,
                                route_table=shortest_routes(g))
    raise DeploymentError(
        f"no deployment with all {n} nodes reaching the gateway in "
        f"{RETRY_BUDGET} tries (|E|={num_edges} too sparse)")


def shortest_routes(g: NetworkGraph) -> dict[int, Route]:
    """Hop-minimal route from every node to the gateway.

    Unit edge weights (capacities are equal); ties broken by smallest edge id
    so the table is deterministic.
    """
    INF = g.n + 1
    dist = [INF] * (g.n + 1)
    dist[g.gateway] = 0
    # BFS on reversed edges gives hop counts; unit weights make Dijkstra = BFS
    rev: list[list[Edge]] = [[] for _ in range(g.n + 1)]
    for e in g.edges:
        rev[e.head].append(e)
    frontier = [g.gateway]
    while frontier:
        nxt = []
        for v in frontier:
            for e in rev[v]:
                if dist[e.tail] == INF:
                    dist[e.tail] = dist[v] + 1
                    nxt.append(e.tail)
        frontier = nxt
    unreachable = [v for v in range(1, g.n + 1) if dist[v] == INF]
    if unreachable:
        raise DeploymentError(f"nodes {unreachable} cannot reach gateway {g.gateway}")

    next_hop: dict[int, Edge] = {}
    for v in range(1, g.n + 1):
        if v == g.gateway:
            continue
        best = None
        for e in g.out_edges(v):
            if dist[e.head] == dist[v] - 1 and (best is None or e.id < best.id):
                best = e
        next_hop[v] = best

    table: dict[int, Route] = {g.gateway: Route(edges=(), hops=0)}
    for v in range(1, g.n + 1):
        if v == g.gateway:
            continue
        path = []
        u = v
        while u != g.gateway:
            e = next_hop[u]
            path.append(e)
            u = e.head
        table[v] = Route(edges=tuple(path), hops=dist[v])
    return table


def write_edge_list(g: NetworkGraph, path: str | Path) -> None:
    """Plain-text deployment: header `n m gateway`, then `tail head capacity` lines."""
    lines = [f"{g.n} {len(g.edges)} {g.gateway}"]
    lines += [f"{e.tail} {e.head} {e.capacity}" for e in g.edges]
    Path(path).write_text("\n".join(lines) + "\n")


def read_edge_list(path: str | Path) -> NetworkGraph:
    tokens = Path(path).read_text().split("\n")
    header = tokens[0].split()
    n, m, gateway = int(header[0]), int(header[1]), int(header[2])
    edges = []
    for i, line in enumerate(tokens[1:m + 1]):
        t, h, c = line.split()
        edges.append(Edge(id=i + 1, tail=int(t), head=int(h), capacity=int(c)))
    g = NetworkGraph(n=n, edges=tuple(edges), gateway=gateway)
    return NetworkGraph(n=n, edges=tuple(edges), gateway=gateway,
                        route_table=shortest_routes(g))
