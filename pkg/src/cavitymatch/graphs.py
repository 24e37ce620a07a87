"""Graph and tree data model, random generators, universal covers, statistics.

Graphs are immutable after construction: vertex count, an edge list with real
weights, and a per-vertex adjacency index.  Generators are pure functions of
their parameters and seed.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    CoverBudgetError,
    InvalidMatchingError,
    NotATreeError,
)
from .laws import DegreeLaw, WeightLaw

__all__ = [
    "WeightedGraph",
    "RootedTree",
    "CoverTree",
    "Matching",
    "MatchingStats",
    "gen_erdos_renyi",
    "gen_config_model",
    "config_model_pairing",
    "gen_path",
    "sample_ubgw",
    "universal_cover",
    "matching_stats",
    "write_graph",
    "read_graph",
    "write_matching",
    "read_matching",
]


class WeightedGraph:
    """Finite undirected graph with real edge weights.

    Vertices are 0..n-1.  Edges are (u, v, w) with u != v and no duplicate
    undirected pairs.  ``adjacency[v]`` lists (neighbour, edge_id) pairs.
    """

    __slots__ = ("n", "edges", "adjacency", "_edge_index")

    def __init__(self, n: int, edges: Sequence[tuple[int, int, float]]):
        if n < 0:
            raise ValueError("vertex count must be nonnegative")
        self.n = int(n)
        canon: list[tuple[int, int, float]] = []
        index: dict[tuple[int, int], int] = {}
        adjacency: list[list[tuple[int, int]]] = [[] for _ in range(self.n)]
        for (u, v, w) in edges:
            u, v, w = int(u), int(v), float(w)
            if u == v:
                raise ValueError(f"self loop at vertex {u}")
            if not (0 <= u < self.n and 0 <= v < self.n):
                raise ValueError(f"edge ({u},{v}) out of range for n={self.n}")
            key = (u, v) if u < v else (v, u)
            if key in index:
                raise ValueError(f"duplicate edge {key}")
            eid = len(canon)
            index[key] = eid
            canon.append((u, v, w))
            adjacency[u].append((v, eid))
            adjacency[v].append((u, eid))
        self.edges = tuple(canon)
        self.adjacency = tuple(tuple(a) for a in adjacency)
        self._edge_index = index

    # -- basic queries -------------------------------------------------------

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def degree(self, v: int) -> int:
        return len(self.adjacency[v])

    def degrees(self) -> np.ndarray:
        return np.asarray([len(a) for a in self.adjacency], dtype=np.int64)

    def mean_degree(self) -> float:
        return 2.0 * self.num_edges / self.n if self.n else 0.0

    def edge_id(self, u: int, v: int) -> int | None:
        return self._edge_index.get((u, v) if u < v else (v, u))

    def has_edge(self, u: int, v: int) -> bool:
        return self.edge_id(u, v) is not None

    def weight(self, u: int, v: int) -> float:
        eid = self.edge_id(u, v)
        if eid is None:
            raise KeyError(f"no edge ({u},{v})")
        return self.edges[eid][2]

    def weights(self) -> np.ndarray:
        return np.asarray([w for (_, _, w) in self.edges], dtype=float)

    def connected_components(self) -> list[list[int]]:
        seen = np.zeros(self.n, dtype=bool)
        comps: list[list[int]] = []
        for start in range(self.n):
            if seen[start]:
                continue
            comp = [start]
            seen[start] = True
            q = deque([start])
            while q:
                v = q.popleft()
                for (u, _) in self.adjacency[v]:
                    if not seen[u]:
                        seen[u] = True
                        comp.append(u)
                        q.append(u)
            comps.append(comp)
        return comps

    def is_tree(self) -> bool:
        if self.n == 0:
            return False
        return self.num_edges == self.n - 1 and len(self.connected_components()) == 1

    def subgraph(self, vertices: Sequence[int]) -> tuple["WeightedGraph", list[int], list[int]]:
        """Induced subgraph; returns (graph, vertex map, edge-id map to self)."""
        vs = list(vertices)
        local = {v: i for i, v in enumerate(vs)}
        sub_edges = []
        edge_map = []
        for v in vs:
            for (u, eid) in self.adjacency[v]:
                if u in local and v < u:
                    a, b, w = self.edges[eid]
                    sub_edges.append((local[a], local[b], w))
                    edge_map.append(eid)
        return WeightedGraph(len(vs), sub_edges), vs, edge_map

    def __repr__(self) -> str:
        return f"WeightedGraph(n={self.n}, m={self.num_edges})"


class RootedTree:
    """A weighted tree rooted at a vertex or at a directed edge (o-, o+)."""

    __slots__ = ("graph", "root", "_order", "_parent")

    def __init__(self, graph: WeightedGraph, root):
        if not graph.is_tree():
            raise NotATreeError(
                f"graph with n={graph.n}, m={graph.num_edges} is not a connected tree"
            )
        if isinstance(root, tuple):
            o_minus, o_plus = int(root[0]), int(root[1])
            if not graph.has_edge(o_minus, o_plus):
                raise ValueError(f"root edge ({o_minus},{o_plus}) not in tree")
            self.root = (o_minus, o_plus)
        else:
            r = int(root)
            if not (0 <= r < graph.n):
                raise ValueError(f"root vertex {r} out of range")
            self.root = r
        self.graph = graph
        self._order = None
        self._parent = None

    @property
    def root_vertex(self) -> int:
        return self.root[0] if isinstance(self.root, tuple) else self.root

    def bfs(self) -> tuple[np.ndarray, np.ndarray]:
        """(BFS order, parent array) from the root vertex; parent of root is -1."""
        if self._order is None:
            g = self.graph
            parent = np.full(g.n, -1, dtype=np.int64)
            order = np.empty(g.n, dtype=np.int64)
            start = self.root_vertex
            order[0] = start
            seen = np.zeros(g.n, dtype=bool)
            seen[start] = True
            head, tail = 0, 1
            while head < tail:
                v = int(order[head])
                head += 1
                for (u, _) in g.adjacency[v]:
                    if not seen[u]:
                        seen[u] = True
                        parent[u] = v
                        order[tail] = u
                        tail += 1
            self._order, self._parent = order, parent
        return self._order, self._parent

    def __repr__(self) -> str:
        return f"RootedTree(n={self.graph.n}, root={self.root})"


@dataclass
class CoverTree:
    """Universal-cover neighbourhood of a rooted edge.

    ``tree`` is edge-rooted at (0, 1), the copies of the covered root edge.
    ``origin[k]`` is the covered vertex for cover vertex k, ``level[k]`` its
    distance to the root edge, and ``truncated[k]`` marks depth-``depth``
    vertices whose non-backtracking walks continue past the horizon.
    """

    tree: RootedTree
    origin: np.ndarray
    level: np.ndarray
    truncated: np.ndarray
    depth: int
    source_edge: tuple[int, int]


class Matching:
    """A set of edges with at most one incident edge per vertex."""

    __slots__ = ("edge_ids", "partner")

    def __init__(self, graph: WeightedGraph, edge_ids: Iterable[int]):
        ids = frozenset(int(e) for e in edge_ids)
        partner: list[int | None] = [None] * graph.n
        for eid in ids:
            if not (0 <= eid < graph.num_edges):
                raise InvalidMatchingError(f"edge id {eid} out of range")
            u, v, _ = graph.edges[eid]
            if partner[u] is not None or partner[v] is not None:
                clash = u if partner[u] is not None else v
                raise InvalidMatchingError(
                    f"vertex {clash} is incident to more than one matched edge"
                )
            partner[u] = v
            partner[v] = u
        self.edge_ids = ids
        self.partner = tuple(partner)

    @classmethod
    def from_pairs(cls, graph: WeightedGraph, pairs: Iterable[tuple[int, int]]) -> Matching:
        ids = []
        for (u, v) in pairs:
            eid = graph.edge_id(u, v)
            if eid is None:
                raise InvalidMatchingError(f"pair ({u},{v}) is not an edge")
            ids.append(eid)
        return cls(graph, ids)

    @classmethod
    def empty(cls, graph: WeightedGraph) -> Matching:
        return cls(graph, ())

    def __len__(self) -> int:
        return len(self.edge_ids)

    def __contains__(self, eid: int) -> bool:
        return eid in self.edge_ids

    def total_weight(self, graph: WeightedGraph) -> float:
        return float(np.sum([graph.edges[e][2] for e in self.edge_ids])) if self.edge_ids else 0.0

    def is_matched(self, v: int) -> bool:
        return self.partner[v] is not None

    def unmatched_vertices(self) -> frozenset[int]:
        return frozenset(v for v, p in enumerate(self.partner) if p is None)

    def pairs(self, graph: WeightedGraph) -> list[tuple[int, int]]:
        out = [(min(graph.edges[e][0], graph.edges[e][1]),
                max(graph.edges[e][0], graph.edges[e][1])) for e in self.edge_ids]
        return sorted(out)


# ---------------------------------------------------------------------------
# Generators
# ---------------------------------------------------------------------------


def gen_erdos_renyi(n: int, c: float, weights: WeightLaw, seed: int) -> WeightedGraph:
    """G(n, p) with p = min(c/n, 1) and iid edge weights.

    Uses geometric skipping over the linearised pair index, equivalent in law
    to an independent Bernoulli(p) per unordered pair.
    """
    if n < 1:
        raise ValueError("need n >= 1")
    if c < 0:
        raise ValueError("need c >= 0")
    rng = np.random.default_rng(np.random.SeedSequence((int(seed), 0xE5)))
    p = min(c / n, 1.0)
    pairs: list[tuple[int, int]] = []
    if p >= 1.0:
        pairs = [(u, v) for v in range(n) for u in range(v)]
    elif p > 0.0:
        lq = math.log1p(-p)
        v, w = 1, -1
        while v < n:
            w += 1 + int(math.log(1.0 - rng.random()) / lq)
            while w >= v and v < n:
                w -= v
                v += 1
            if v < n:
                pairs.append((w, v))
    ws = weights.sample(rng, len(pairs))
    return WeightedGraph(n, [(u, v, float(x)) for (u, v), x in zip(pairs, ws)])


def config_model_pairing(
    degrees: Sequence[int], weights: WeightLaw, seed: int
) -> tuple[WeightedGraph, int, int]:
    """Configuration model with simple-graph projection.

    A uniform pairing of half-edges; if the degree sum is odd the last entry
    is incremented.  Self loops and parallel edges from the pairing are
    dropped; returns (graph, dropped_self_loops, dropped_parallel).
    """
    degs = [int(d) for d in degrees]
    if any(d < 0 for d in degs):
        raise ValueError("degrees must be nonnegative")
    if sum(degs) % 2 == 1:
        degs[-1] += 1
    rng = np.random.default_rng(np.random.SeedSequence((int(seed), 0xCF)))
    stubs = np.repeat(np.arange(len(degs), dtype=np.int64), degs)
    rng.shuffle(stubs)
    n_loops = 0
    n_parallel = 0
    seen: set[tuple[int, int]] = set()
    pairs: list[tuple[int, int]] = []
    for i in range(0, len(stubs), 2):
        u, v = int(stubs[i]), int(stubs[i + 1])
        if u == v:
            n_loops += 1
            continue
        key = (u, v) if u < v else (v, u)
        if key in seen:
            n_parallel += 1
            continue
        seen.add(key)
        pairs.append(key)
    ws = weights.sample(rng, len(pairs))
    g = WeightedGraph(len(degs), [(u, v, float(x)) for (u, v), x in zip(pairs, ws)])
    return g, n_loops, n_parallel


def gen_config_model(degrees: Sequence[int], weights: WeightLaw, seed: int) -> WeightedGraph:
    """Configuration-model graph (see :func:`config_model_pairing`)."""
    return config_model_pairing(degrees, weights, seed)[0]


def gen_path(n: int, weights: WeightLaw, seed: int) -> WeightedGraph:
    """Path on n vertices with iid weights."""
    if n < 1:
        raise ValueError("need n >= 1")
    rng = np.random.default_rng(np.random.SeedSequence((int(seed), 0xBA)))
    ws = weights.sample(rng, max(n - 1, 0))
    return WeightedGraph(n, [(i, i + 1, float(ws[i])) for i in range(n - 1)])


def sample_ubgw(
    depth: int,
    law: DegreeLaw,
    weights: WeightLaw,
    rooting: str,
    seed: int,
) -> RootedTree:
    """Sample the two-sided branching-tree neighbourhood of a typical root.

    ``rooting="edge"``: two independent offspring-law trees truncated at
    ``depth`` generations, joined by a root edge.  ``rooting="vertex"``: the
    root draws its child count from the degree law itself, every other vertex
    from the offspring law.
    """
    if depth < 0:
        raise ValueError("depth must be >= 0")
    if rooting not in ("edge", "vertex"):
        raise ValueError("rooting must be 'edge' or 'vertex'")
    rng = np.random.default_rng(np.random.SeedSequence((int(seed), 0x6B)))
    edges: list[tuple[int, int, float]] = []
    if rooting == "edge":
        nodes = [0, 1]
        edges.append((0, 1, float(weights.sample(rng, 1)[0])))
        frontier = [(0, 0), (1, 0)]
        root = (0, 1)
    else:
        nodes = [0]
        frontier = []
        root = 0
        k = int(law.sample_degrees(rng, 1)[0])
        if depth >= 1:
            for _ in range(k):
                child = len(nodes)
                nodes.append(child)
                edges.append((0, child, float(weights.sample(rng, 1)[0])))
                frontier.append((child, 1))
    queue = deque(frontier)
    while queue:
        v, d = queue.popleft()
        if d >= depth:
            continue
        k = int(law.sample_offspring(rng, 1)[0])
        for _ in range(k):
            child = len(nodes)
            nodes.append(child)
            edges.append((v, child, float(weights.sample(rng, 1)[0])))
            queue.append((child, d + 1))
    return RootedTree(WeightedGraph(len(nodes), edges), root)


# ---------------------------------------------------------------------------
# Universal cover
# ---------------------------------------------------------------------------


def universal_cover(
    g: WeightedGraph,
    root_edge: tuple[int, int],
    H: int,
    max_vertices: int = 100_000,
) -> CoverTree:
    """Depth-H tree of non-backtracking walks from a rooted edge.

    The root edge's endpoints are the two level-0 vertices; children of a
    cover vertex are the neighbours of its covered vertex except the one it
    arrived from.  Weights are copied from the covered edges.  Raises
    :class:`CoverBudgetError` when the cover would exceed ``max_vertices``.
    """
    i, j = int(root_edge[0]), int(root_edge[1])
    root_eid = g.edge_id(i, j)
    if root_eid is None:
        raise ValueError(f"root edge ({i},{j}) is not an edge of the graph")
    if H < 0:
        raise ValueError("H must be >= 0")

    origin = [i, j]
    level = [0, 0]
    came_from = [j, i]
    edges: list[tuple[int, int, float]] = [(0, 1, g.edges[root_eid][2])]
    truncated = [False, False]
    queue = deque([0, 1])
    while queue:
        k = queue.popleft()
        v, prev, lv = origin[k], came_from[k], level[k]
        onward = [(u, eid) for (u, eid) in g.adjacency[v] if u != prev]
        if lv >= H:
            truncated[k] = bool(onward)
            continue
        for (u, eid) in onward:
            child = len(origin)
            if child >= max_vertices:
                raise CoverBudgetError(
                    f"cover of edge ({i},{j}) at depth {H} exceeds {max_vertices} vertices"
                )
            origin.append(u)
            came_from.append(v)
            level.append(lv + 1)
            truncated.append(False)
            edges.append((k, child, g.edges[eid][2]))
            queue.append(child)
    tree = RootedTree(WeightedGraph(len(origin), edges), (0, 1))
    return CoverTree(
        tree=tree,
        origin=np.asarray(origin, dtype=np.int64),
        level=np.asarray(level, dtype=np.int64),
        truncated=np.asarray(truncated, dtype=bool),
        depth=int(H),
        source_edge=(i, j),
    )


# ---------------------------------------------------------------------------
# Statistics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MatchingStats:
    total_weight: float
    matched_edge_fraction: float
    matched_vertex_fraction: float
    perf_v: float
    perf_e: float
    mean_degree: float


def matching_stats(g: WeightedGraph, m: Matching) -> MatchingStats:
    """Weight and density statistics of a matching.

    ``perf_v`` is the average over vertices of incident matched weight,
    ``perf_e`` the average matched weight per directed edge; the identity
    perf_v = mean_degree * perf_e holds exactly and is asserted here.
    """
    if len(m.partner) != g.n:
        raise InvalidMatchingError("matching does not belong to this graph")
    matched_w = np.asarray(
        [g.edges[e][2] for e in sorted(m.edge_ids)], dtype=float
    )
    total = float(np.sum(matched_w)) if matched_w.size else 0.0
    n, me = g.n, g.num_edges
    # perf_v summed per vertex over incident matched edges (independent route)
    per_vertex = np.zeros(n, dtype=float)
    for eid in m.edge_ids:
        u, v, w = g.edges[eid]
        per_vertex[u] += w
        per_vertex[v] += w
    perf_v = float(np.sum(per_vertex)) / n if n else 0.0
    perf_e = total / me if me else 0.0
    mean_degree = 2.0 * me / n if n else 0.0
    if total != 0.0:
        rel = abs(perf_v - mean_degree * perf_e) / max(abs(perf_v), 1e-300)
        if rel > 1e-12:
            raise AssertionError(
                f"performance identity violated: relative error {rel:.3e}"
            )
    return MatchingStats(
        total_weight=total,
        matched_edge_fraction=len(m.edge_ids) / me if me else 0.0,
        matched_vertex_fraction=2.0 * len(m.edge_ids) / n if n else 0.0,
        perf_v=perf_v,
        perf_e=perf_e,
        mean_degree=mean_degree,
    )


# ---------------------------------------------------------------------------
# File formats
# ---------------------------------------------------------------------------


def write_graph(path, g: WeightedGraph) -> None:
    """Plain-text format: header "n m", then one "u v w" line per edge."""
    with open(path, "w") as fh:
        fh.write(f"{g.n} {g.num_edges}\n")
        for (u, v, w) in g.edges:
            fh.write(f"{u} {v} {w!r}\n")


def read_graph(path) -> WeightedGraph:
    with open(path) as fh:
        header = fh.readline().split()
        n, m = int(header[0]), int(header[1])
        edges = []
        for _ in range(m):
            u, v, w = fh.readline().split()
            edges.append((int(u), int(v), float(w)))
    return WeightedGraph(n, edges)


def write_matching(path, g: WeightedGraph, m: Matching) -> None:
    with open(path, "w") as fh:
        json.dump(m.pairs(g), fh)


def read_matching(path, g: WeightedGraph) -> Matching:
    with open(path) as fh:
        pairs = json.load(fh)
    return Matching.from_pairs(g, [(int(u), int(v)) for (u, v) in pairs])
