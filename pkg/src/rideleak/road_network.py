"""Road graphs, shortest paths and the Lipschitz-style road network embedding.

A location (graph node) ``u`` is encoded as an integer vector whose i-th
coordinate is the shortest-path distance from ``u`` to the nearest node of
reference set i. Two encodings are compared with the max-norm of their
difference.
"""
from __future__ import annotations

import heapq
import math
import re
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import (
    CoordinateOverflow,
    DimensionMismatch,
    DisconnectedGraph,
    EtaExceedsBudget,
    InvalidNodeId,
    NegativeWeight,
)

MAX_BLOCK_BITS = 8

Edge = tuple[int, int, int]


@dataclass(frozen=True)
class RoadGraph:
    """Weighted undirected graph of road intersections.

    Validated on construction: ids in range, no self loops, non-negative
    integer weights, connected.
    """

    node_count: int
    edges: tuple[Edge, ...]

    def __post_init__(self) -> None:
        if self.node_count < 1:
            raise InvalidNodeId(f"node_count must be positive, got {self.node_count}")
        for u, v, w in self.edges:
            for x in (u, v):
                if not 0 <= x < self.node_count:
                    raise InvalidNodeId(f"edge ({u}, {v}) references node {x} outside [0, {self.node_count})")
            if u == v:
                raise InvalidNodeId(f"self-loop on node {u}")
            if isinstance(w, bool) or not isinstance(w, (int, np.integer)):
                raise TypeError(f"edge weight must be an integer, got {w!r}")
            if w < 0:
                raise NegativeWeight(f"edge ({u}, {v}) has negative weight {w}")
        reached = _reachable(self.adjacency, 0)
        if len(reached) != self.node_count:
            missing = min(set(range(self.node_count)) - reached)
            raise DisconnectedGraph(f"node {missing} is unreachable from node 0")

    @cached_property
    def adjacency(self) -> tuple[tuple[tuple[int, int], ...], ...]:
        adj: list[list[tuple[int, int]]] = [[] for _ in range(self.node_count)]
        for u, v, w in self.edges:
            adj[u].append((v, int(w)))
            adj[v].append((u, int(w)))
        return tuple(tuple(a) for a in adj)

    @cached_property
    def diameter(self) -> int:
        return max(max(dijkstra(self, [s])) for s in range(self.node_count))

    def check_node(self, u: int) -> None:
        if not 0 <= u < self.node_count:
            raise InvalidNodeId(f"node {u} outside [0, {self.node_count})")


def _reachable(adj: Sequence[Sequence[tuple[int, int]]], start: int) -> set[int]:
    seen = {start}
    stack = [start]
    while stack:
        x = stack.pop()
        for y, _ in adj[x]:
            if y not in seen:
                seen.add(y)
                stack.append(y)
    return seen


def build_graph(node_count: int, edges: Iterable[Sequence[int]]) -> RoadGraph:
    return RoadGraph(node_count, tuple((int(u), int(v), w) for u, v, w in edges))


def grid_graph(width: int, height: int, weight: int = 1) -> RoadGraph:
    """``width`` x ``height`` lattice; node id is ``row * width + col``."""
    if width < 1 or height < 1:
        raise InvalidNodeId(f"grid dimensions must be positive, got {width}x{height}")
    edges = []
    for r in range(height):
        for c in range(width):
            u = r * width + c
            if c + 1 < width:
                edges.append((u, u + 1, weight))
            if r + 1 < height:
                edges.append((u, u + width, weight))
    return build_graph(width * height, edges)


def parse_edge_list(text: str) -> RoadGraph:
    """Parse the plain-text format: a ``nodes N`` header then ``u v w`` lines.

    ``#`` starts a comment; blank lines are ignored.
    """
    node_count = None
    edges = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if node_count is None:
            if len(parts) != 2 or parts[0] != "nodes":
                raise ValueError(f"line {lineno}: expected 'nodes N' header, got {raw!r}")
            node_count = int(parts[1])
            continue
        if len(parts) != 3:
            raise ValueError(f"line {lineno}: expected 'u v w', got {raw!r}")
        edges.append(tuple(int(p) for p in parts))
    if node_count is None:
        raise ValueError("missing 'nodes N' header")
    return build_graph(node_count, edges)


def load_edge_list(path: str | Path) -> RoadGraph:
    return parse_edge_list(Path(path).read_text())


def dump_edge_list(g: RoadGraph) -> str:
    lines = [f"nodes {g.node_count}"]
    lines += [f"{u} {v} {w}" for u, v, w in g.edges]
    return "\n".join(lines) + "\n"


_GRID_RE = re.compile(r"^(\d+)[xX](\d+)$")


def parse_grid_spec(spec: str) -> tuple[int, int]:
    m = _GRID_RE.match(spec.strip())
    if not m:
        raise ValueError(f"grid must look like WxH, got {spec!r}")
    return int(m.group(1)), int(m.group(2))


def dijkstra(g: RoadGraph, sources: Iterable[int]) -> list[int]:
    """Distance from the nearest of ``sources`` to every node."""
    dist = [math.inf] * g.node_count
    heap = []
    for s in sources:
        g.check_node(s)
        dist[s] = 0
        heap.append((0, s))
    heapq.heapify(heap)
    adj = g.adjacency
    while heap:
        d, x = heapq.heappop(heap)
        if d > dist[x]:
            continue
        for y, w in adj[x]:
            nd = d + w
            if nd < dist[y]:
                dist[y] = nd
                heapq.heappush(heap, (nd, y))
    return dist  # type: ignore[return-value]  # connected, so every entry is an int


def shortest_path_dist(g: RoadGraph, u: int, v: int) -> int:
    g.check_node(u)
    g.check_node(v)
    return dijkstra(g, [u])[v]


@dataclass(frozen=True)
class EmbeddingConfig:
    eta: int
    l: int
    m: int
    seed: int = 0
    set_size: int | None = None

    def __post_init__(self) -> None:
        if self.eta < 1:
            raise ValueError(f"eta must be >= 1, got {self.eta}")
        if not 1 <= self.l <= MAX_BLOCK_BITS:
            raise ValueError(f"l must be in [1, {MAX_BLOCK_BITS}], got {self.l}")
        if self.m < 1:
            raise ValueError(f"m must be >= 1, got {self.m}")

    @property
    def coord_bits(self) -> int:
        return self.m * self.l

    @property
    def coord_limit(self) -> int:
        """Exclusive upper bound on any coordinate, ``2**(m*l)``."""
        return 1 << self.coord_bits

    def check_fits(self, g: RoadGraph) -> None:
        if self.coord_limit <= g.diameter:
            raise CoordinateOverflow(
                f"2^(m*l) = {self.coord_limit} must exceed the graph diameter {g.diameter}"
            )


@dataclass(frozen=True)
class ReferenceSets:
    sets: tuple[tuple[int, ...], ...]
    coord_bits: int | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        if not self.sets:
            raise EtaExceedsBudget("need at least one reference set")
        for s in self.sets:
            if not s:
                raise EtaExceedsBudget("reference sets must be non-empty")

    @property
    def eta(self) -> int:
        return len(self.sets)

    def validate(self, g: RoadGraph) -> None:
        for s in self.sets:
            for x in s:
                g.check_node(x)


def default_set_size(node_count: int) -> int:
    return max(1, math.ceil(math.log2(node_count))) if node_count > 1 else 1


def build_reference_sets(
    g: RoadGraph, cfg: EmbeddingConfig, rng: np.random.Generator | None = None
) -> ReferenceSets:
    """Sample ``cfg.eta`` node subsets, each without replacement.

    Uses ``np.random.default_rng(cfg.seed)`` when no generator is supplied,
    so the result is a pure function of the graph and the config.
    """
    cfg.check_fits(g)
    size = cfg.set_size if cfg.set_size is not None else default_set_size(g.node_count)
    if not 1 <= size <= g.node_count:
        raise EtaExceedsBudget(f"set size {size} infeasible for {g.node_count} nodes")
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    sets = tuple(
        tuple(sorted(int(x) for x in rng.choice(g.node_count, size=size, replace=False)))
        for _ in range(cfg.eta)
    )
    return ReferenceSets(sets, coord_bits=cfg.coord_bits)


@dataclass(frozen=True)
class RneVector:
    coords: tuple[int, ...]

    def __post_init__(self) -> None:
        for c in self.coords:
            if c < 0:
                raise ValueError(f"RNE coordinates are unsigned, got {c}")

    def __len__(self) -> int:
        return len(self.coords)

    def __iter__(self) -> Iterator[int]:
        return iter(self.coords)

    def __getitem__(self, i: int) -> int:
        return self.coords[i]

    def check_bits(self, bits: int) -> None:
        for i, c in enumerate(self.coords):
            if c >> bits:
                raise CoordinateOverflow(f"coordinate {i} = {c} does not fit in {bits} bits")


def vec(*coords: int) -> RneVector:
    return RneVector(tuple(int(c) for c in coords))


@lru_cache(maxsize=32)
def _set_distances(g: RoadGraph, refs: ReferenceSets) -> tuple[tuple[int, ...], ...]:
    return tuple(tuple(dijkstra(g, s)) for s in refs.sets)


def embed(g: RoadGraph, refs: ReferenceSets, u: int) -> RneVector:
    g.check_node(u)
    refs.validate(g)
    out = RneVector(tuple(d[u] for d in _set_distances(g, refs)))
    if refs.coord_bits is not None:
        out.check_bits(refs.coord_bits)
    return out


def embed_all(g: RoadGraph, refs: ReferenceSets) -> list[RneVector]:
    """Embedding of every node, indexed by node id."""
    refs.validate(g)
    table = _set_distances(g, refs)
    out = [RneVector(tuple(d[u] for d in table)) for u in range(g.node_count)]
    if refs.coord_bits is not None:
        for v in out:
            v.check_bits(refs.coord_bits)
    return out


def rne_distance(a: RneVector | Sequence[int], b: RneVector | Sequence[int]) -> int:
    if len(a) != len(b):
        raise DimensionMismatch(f"vector lengths differ: {len(a)} vs {len(b)}")
    return max((abs(x - y) for x, y in zip(a, b)), default=0)
