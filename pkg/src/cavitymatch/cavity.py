"""Message passing for maximum-weight matchings on trees and graphs.

Every directed edge (u, v) carries a value z(u, v) >= 0, the penalty of
excluding v from the optimal matching of the branch hanging off (u, v).  The
fixed point satisfies

    z(u, v) = max(0, max over u' ~ v, u' != u of (w(v, u') - z(v, u')))

and the edge {u, v} is matched iff z(u, v) + z(v, u) < w(u, v).  On finite
trees the fixed point is computed exactly in two linear passes; on graphs with
cycles the update is iterated synchronously with optional damping.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import (
    InconsistentMessagesError,
    InvalidMatchingError,
    SolverBudgetError,
)
from .graphs import Matching, RootedTree, WeightedGraph

__all__ = [
    "MessageField",
    "SelfLoopedTree",
    "MessageConsistencyWarning",
    "solve_messages_tree",
    "decide_matching",
    "vertex_rule_violations",
    "tree_opt",
    "augment_self_loops",
    "bp_iterate",
    "BpResult",
    "field_residual",
    "brute_force_opt",
    "exact_opt_by_components",
    "ExactComponentsResult",
]


class MessageConsistencyWarning(UserWarning):
    """Emitted when a decided matching violates the vertex rule."""


@dataclass
class MessageField:
    """Values z(u, v) for both orientations of every edge.

    Directed pair 2*eid is (u, v) as stored in the edge list, 2*eid + 1 the
    reverse.  ``self_loop[v]``, when present, is the signed gain of forcing v
    to be matched (may be negative; -inf for isolated vertices).
    """

    z: np.ndarray
    self_loop: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.z = np.asarray(self.z, dtype=float)
        if np.any(self.z < 0):
            raise ValueError("directed-edge values must be nonnegative")

    def get(self, g: WeightedGraph, u: int, v: int) -> float:
        eid = g.edge_id(u, v)
        if eid is None:
            raise KeyError(f"no edge ({u},{v})")
        a, _, _ = g.edges[eid]
        return float(self.z[2 * eid + (0 if a == u else 1)])

    def to_json(self, g: WeightedGraph) -> str:
        data = {}
        for eid, (u, v, _) in enumerate(g.edges):
            data[f"{u}->{v}"] = self.z[2 * eid]
            data[f"{v}->{u}"] = self.z[2 * eid + 1]
        if self.self_loop is not None:
            for v, s in enumerate(self.self_loop):
                data[f"{v}->{v}"] = s
        return json.dumps(data)

    @classmethod
    def from_json(cls, g: WeightedGraph, text: str) -> MessageField:
        data = json.loads(text)
        z = np.zeros(2 * g.num_edges)
        for eid, (u, v, _) in enumerate(g.edges):
            z[2 * eid] = data[f"{u}->{v}"]
            z[2 * eid + 1] = data[f"{v}->{u}"]
        loops = None
        if any(k.split("->")[0] == k.split("->")[1] for k in data):
            loops = np.full(g.n, -np.inf)
            for v in range(g.n):
                key = f"{v}->{v}"
                if key in data:
                    loops[v] = data[key]
        return cls(z, loops)


@dataclass
class SelfLoopedTree:
    """A rooted tree augmented with one self loop per vertex.

    The loop weight equals the extended message value at the loop, so partial
    matchings of the base tree correspond to perfect matchings here: a vertex
    is unmatched in the base exactly when its (negative-weight) loop is taken.
    """

    base: RootedTree
    self_loop_weight: np.ndarray


# ---------------------------------------------------------------------------
# Exact solve on trees
# ---------------------------------------------------------------------------


def solve_messages_tree(t: RootedTree) -> MessageField:
    """Exact fixed point on a finite tree via a leaf-up and a root-down pass.

    Linear time: the downward pass evaluates exclude-one maxima with per-vertex
    (max, second max, multiplicity) statistics of w - z over neighbours.
    """
    g = t.graph
    order, parent = t.bfs()
    up = np.zeros(g.n)
    for idx in range(g.n - 1, -1, -1):
        v = int(order[idx])
        pv = parent[v]
        best = 0.0
        for (u, eid) in g.adjacency[v]:
            if u != pv:
                cand = g.edges[eid][2] - up[u]
                if cand > best:
                    best = cand
        up[v] = best
    down = np.zeros(g.n)
    for idx in range(g.n):
        p = int(order[idx])
        pp = parent[p]
        max1 = -math.inf
        max2 = -math.inf
        count1 = 0
        for (u, eid) in g.adjacency[p]:
            s = g.edges[eid][2] - (down[p] if u == pp else up[u])
            if s > max1:
                max2, max1, count1 = max1, s, 1
            elif s == max1:
                count1 += 1
            elif s > max2:
                max2 = s
        for (u, eid) in g.adjacency[p]:
            if u == pp:
                continue
            s = g.edges[eid][2] - up[u]
            ex = max2 if (s == max1 and count1 == 1) else max1
            down[u] = max(0.0, ex)
    z = np.zeros(2 * g.num_edges)
    for eid, (a, b, _) in enumerate(g.edges):
        # z(a, b) summarises the branch containing b
        z[2 * eid] = up[b] if parent[b] == a else down[a]
        z[2 * eid + 1] = up[a] if parent[a] == b else down[b]
    return MessageField(z)


# ---------------------------------------------------------------------------
# Decision rule
# ---------------------------------------------------------------------------


def _as_graph(t) -> WeightedGraph:
    return t.graph if isinstance(t, RootedTree) else t


def vertex_rule_violations(
    g: WeightedGraph, f: MessageField, m: Matching, tol: float = 1e-9
) -> list[str]:
    """Check the per-vertex form of the decision rule against a matching.

    A matched vertex must attain the (positive) maximum of w(u, v') - z(u, v')
    at its partner; an unmatched vertex must have that maximum <= 0.
    """
    out: list[str] = []
    for u in range(g.n):
        best = -math.inf
        best_v = None
        for (v, eid) in g.adjacency[u]:
            a, _, w = g.edges[eid]
            s = w - f.z[2 * eid + (0 if a == u else 1)]
            if s > best:
                best, best_v = s, v
        p = m.partner[u]
        if p is None:
            if best > tol:
                out.append(f"vertex {u}: unmatched but max gain {best:.6g} > 0")
        else:
            eid = g.edge_id(u, p)
            a = g.edges[eid][0]
            s = g.edges[eid][2] - f.z[2 * eid + (0 if a == u else 1)]
            if s <= tol:
                out.append(f"vertex {u}: partner {p} has non-positive gain {s:.6g}")
            elif best_v != p and best - s > tol:
                out.append(
                    f"vertex {u}: partner {p} not the argmax "
                    f"(gain {s:.6g} < best {best:.6g} at {best_v})"
                )
    return out


def decide_matching(t, f: MessageField, check_vertex_rule: bool = True) -> Matching:
    """Edge rule: select {u, v} iff z(u, v) + z(v, u) < w(u, v) (strict).

    Raises :class:`InconsistentMessagesError` if the rule selects two edges at
    one vertex (possible only for non-fixed-point fields on cyclic graphs).
    Vertex-rule violations are reported as a warning, not an error.
    """
    g = _as_graph(t)
    selected = [
        eid
        for eid, (_, _, w) in enumerate(g.edges)
        if f.z[2 * eid] + f.z[2 * eid + 1] < w
    ]
    try:
        m = Matching(g, selected)
    except InvalidMatchingError as exc:
        raise InconsistentMessagesError(str(exc)) from exc
    if check_vertex_rule:
        bad = vertex_rule_violations(g, f, m)
        if bad:
            warnings.warn(
                f"{len(bad)} vertex-rule violation(s); first: {bad[0]}",
                MessageConsistencyWarning,
                stacklevel=2,
            )
    return m


# ---------------------------------------------------------------------------
# Exact optimum on trees (independent dynamic program)
# ---------------------------------------------------------------------------


def tree_opt(t: RootedTree) -> tuple[float, Matching]:
    """Maximum matching weight on a tree, with a matching attaining it.

    The empty matching is allowed, so the value is always >= 0.
    """
    g = t.graph
    order, parent = t.bfs()
    excl = np.zeros(g.n)  # best weight in the subtree with v left unmatched
    best = np.zeros(g.n)  # best weight in the subtree
    pick = np.full(g.n, -1, dtype=np.int64)
    for idx in range(g.n - 1, -1, -1):
        v = int(order[idx])
        pv = parent[v]
        acc = 0.0
        gain = 0.0
        chosen = -1
        for (u, eid) in g.adjacency[v]:
            if u == pv:
                continue
            acc += best[u]
            cand = g.edges[eid][2] - (best[u] - excl[u])
            if cand > gain:
                gain = cand
                chosen = u
        excl[v] = acc
        best[v] = acc + gain
        pick[v] = chosen
    blocked = np.zeros(g.n, dtype=bool)
    chosen_edges = []
    for idx in range(g.n):
        v = int(order[idx])
        if blocked[v]:
            continue
        c = int(pick[v])
        if c >= 0:
            chosen_edges.append(g.edge_id(v, c))
            blocked[c] = True
    root = t.root_vertex
    return float(best[root]), Matching(g, chosen_edges)


# ---------------------------------------------------------------------------
# Self loops
# ---------------------------------------------------------------------------


def augment_self_loops(
    t: RootedTree, f: MessageField
) -> tuple[SelfLoopedTree, MessageField]:
    """Attach a self loop of weight max over u' ~ v of (w(v, u') - z(v, u')).

    With loop weight equal to the loop message, the recursion keeps its form
    on the augmented tree, and a vertex takes its loop (weight < 0) exactly
    when the decision rule leaves it unmatched.
    """
    g = t.graph
    loops = np.full(g.n, -np.inf)
    for v in range(g.n):
        best = -math.inf
        for (u, eid) in g.adjacency[v]:
            a, _, w = g.edges[eid]
            s = w - f.z[2 * eid + (0 if a == v else 1)]
            if s > best:
                best = s
        loops[v] = best
    extended = MessageField(f.z.copy(), loops)
    return SelfLoopedTree(base=t, self_loop_weight=loops.copy()), extended


# ---------------------------------------------------------------------------
# Synchronous iteration on general graphs
# ---------------------------------------------------------------------------


class _Sweep:
    """Static index structure for vectorised synchronous updates."""

    def __init__(self, g: WeightedGraph):
        m2 = 2 * g.num_edges
        tails = np.empty(m2, dtype=np.int64)
        heads = np.empty(m2, dtype=np.int64)
        wdir = np.empty(m2, dtype=float)
        for eid, (u, v, w) in enumerate(g.edges):
            tails[2 * eid], heads[2 * eid] = u, v
            tails[2 * eid + 1], heads[2 * eid + 1] = v, u
            wdir[2 * eid] = wdir[2 * eid + 1] = w
        counts = np.bincount(tails, minlength=g.n)
        sizes = counts + 1  # one -inf sentinel per vertex group
        offsets = np.zeros(g.n, dtype=np.int64)
        np.cumsum(sizes[:-1], out=offsets[1:])
        order = np.argsort(tails, kind="stable")
        first_occ = np.searchsorted(tails[order], np.arange(g.n), side="left")
        rank = np.arange(m2) - first_occ[tails[order]]
        gpos = np.empty(m2, dtype=np.int64)
        gpos[order] = offsets[tails[order]] + 1 + rank
        self.n = g.n
        self.m2 = m2
        self.heads = heads
        self.wdir = wdir
        self.offsets = offsets
        self.gpos = gpos
        self.rev_gpos = gpos[np.arange(m2) ^ 1]
        self.layout = m2 + g.n
        self.gid = np.repeat(np.arange(g.n), np.diff(np.append(offsets, self.layout)))
        self.pos = np.arange(self.layout)

    def update(self, z: np.ndarray) -> np.ndarray:
        arr = np.full(self.layout, -np.inf)
        arr[self.gpos] = self.wdir - z
        max1 = np.maximum.reduceat(arr, self.offsets)
        cand = np.where(arr == max1[self.gid], self.pos, self.layout)
        first = np.minimum.reduceat(cand, self.offsets)
        arr2 = arr.copy()
        arr2[first] = -np.inf
        max2 = np.maximum.reduceat(arr2, self.offsets)
        h = self.heads
        ex = self.rev_gpos == first[h]
        return np.maximum(0.0, np.where(ex, max2[h], max1[h]))


class BpResult(NamedTuple):
    field: MessageField
    converged: bool
    residual: float


def field_residual(g: WeightedGraph, f: MessageField) -> float:
    """Max absolute change of one undamped synchronous update."""
    if g.num_edges == 0:
        return 0.0
    return float(np.max(np.abs(_Sweep(g).update(f.z) - f.z)))


def bp_iterate(
    g: WeightedGraph,
    init: MessageField | None = None,
    sweeps: int = 200,
    damping: float = 0.0,
    tol: float = 1e-10,
) -> BpResult:
    """Damped synchronous iteration of the message update on any graph.

    z <- (1 - damping) * update(z) + damping * z, stopping when the largest
    directed-edge change falls below ``tol``.  Non-convergence is reported in
    the returned flag, never silently.  On trees with damping 0 the iteration
    is exact within diameter-many sweeps.
    """
    if not (0.0 <= damping < 1.0):
        raise ValueError("damping must be in [0, 1)")
    if g.num_edges == 0:
        return BpResult(MessageField(np.zeros(0)), True, 0.0)
    sweep = _Sweep(g)
    z = np.zeros(sweep.m2) if init is None else np.asarray(init.z, dtype=float).copy()
    residual = math.inf
    converged = False
    for _ in range(sweeps):
        nz = sweep.update(z)
        if damping:
            nz = (1.0 - damping) * nz + damping * z
        residual = float(np.max(np.abs(nz - z)))
        z = nz
        if residual < tol:
            converged = True
            break
    return BpResult(MessageField(np.maximum(z, 0.0)), converged, residual)


# ---------------------------------------------------------------------------
# Brute-force oracle and per-component exact solver
# ---------------------------------------------------------------------------


def _branch_and_bound(
    edges: list[tuple[int, int, float]], n: int
) -> tuple[float, list[int]]:
    """Exact maximum over matchings of an edge list (indices into ``edges``).

    Edges are scanned in descending weight with include/exclude branching;
    non-positive weights never help and are skipped up front.
    """
    pos = [(i, e) for i, e in enumerate(edges) if e[2] > 0.0]
    pos.sort(key=lambda t: -t[1][2])
    ws = [e[2] for _, e in pos]
    suffix = np.concatenate([np.cumsum(ws[::-1])[::-1], [0.0]]) if ws else np.zeros(1)
    used = [False] * n
    best_val = 0.0
    best_set: list[int] = []
    cur: list[int] = []

    def rec(i: int, cur_w: float) -> None:
        nonlocal best_val, best_set
        if cur_w > best_val:
            best_val = cur_w
            best_set = cur.copy()
        if i == len(pos) or cur_w + suffix[i] <= best_val:
            return
        orig, (u, v, w) = pos[i]
        if not used[u] and not used[v]:
            used[u] = used[v] = True
            cur.append(orig)
            rec(i + 1, cur_w + w)
            cur.pop()
            used[u] = used[v] = False
        rec(i + 1, cur_w)

    rec(0, 0.0)
    return best_val, best_set


def brute_force_opt(g: WeightedGraph, max_edges: int = 24) -> tuple[float, Matching]:
    """Exact maximum-weight matching by branch and bound, per component.

    Raises :class:`SolverBudgetError` if any connected component has more than
    ``max_edges`` edges.
    """
    total = 0.0
    chosen: list[int] = []
    for comp in g.connected_components():
        if len(comp) == 1:
            continue
        sub, _, edge_map = g.subgraph(comp)
        if sub.num_edges > max_edges:
            raise SolverBudgetError(
                f"component with {sub.num_edges} edges exceeds bound {max_edges}"
            )
        val, local = _branch_and_bound(list(sub.edges), sub.n)
        total += val
        chosen.extend(edge_map[i] for i in local)
    return total, Matching(g, chosen)


def _forest_opt(
    sub: WeightedGraph, blocked: np.ndarray
) -> tuple[float, list[int]]:
    """Tree DP on a tree (or its forest after deleting blocked vertices).

    Blocked vertices cannot be matched and their incident edges are unusable;
    the subtrees hanging below them still contribute.
    """
    n = sub.n
    parent = np.full(n, -2, dtype=np.int64)
    order = []
    for start in range(n):
        if parent[start] != -2:
            continue
        parent[start] = -1
        stack = [start]
        while stack:
            v = stack.pop()
            order.append(v)
            for (u, _) in sub.adjacency[v]:
                if parent[u] == -2:
                    parent[u] = v
                    stack.append(u)
    excl = np.zeros(n)
    best = np.zeros(n)
    pick = np.full(n, -1, dtype=np.int64)
    for v in reversed(order):
        pv = parent[v]
        acc = 0.0
        gain = 0.0
        chosen = -1
        for (u, eid) in sub.adjacency[v]:
            if u == pv:
                continue
            acc += best[u]
            if not blocked[v] and not blocked[u]:
                cand = sub.edges[eid][2] - (best[u] - excl[u])
                if cand > gain:
                    gain = cand
                    chosen = u
        excl[v] = acc
        best[v] = acc if blocked[v] else acc + gain
        pick[v] = chosen
    value = float(sum(best[v] for v in order if parent[v] == -1))
    taken = blocked.copy()
    edges: list[int] = []
    for v in order:
        if taken[v]:
            continue
        c = int(pick[v])
        if c >= 0 and not taken[c]:
            edges.append(sub.edge_id(v, c))
            taken[c] = True
            taken[v] = True
    return value, edges


def _sparse_cyclic_opt(sub: WeightedGraph) -> tuple[float, list[int]]:
    """Exact optimum of a connected component with few independent cycles.

    Picks a spanning tree and enumerates, over the off-tree edges with
    positive weight, every vertex-disjoint subset forced into the matching;
    the rest is a tree problem with the covered vertices deleted.
    """
    in_tree = np.zeros(sub.num_edges, dtype=bool)
    seen = np.zeros(sub.n, dtype=bool)
    seen[0] = True
    stack = [0]
    while stack:
        v = stack.pop()
        for (u, eid) in sub.adjacency[v]:
            if not seen[u]:
                seen[u] = True
                in_tree[eid] = True
                stack.append(u)
    tree = WeightedGraph(
        sub.n, [sub.edges[e] for e in np.flatnonzero(in_tree)]
    )
    tree_ids = list(np.flatnonzero(in_tree))
    extras = [
        (eid, sub.edges[eid]) for eid in np.flatnonzero(~in_tree)
        if sub.edges[eid][2] > 0
    ]
    best_val = -math.inf
    best_edges: list[int] = []
    k = len(extras)

    def rec(i: int, blocked: np.ndarray, forced: list[int], acc: float) -> None:
        nonlocal best_val, best_edges
        if i == k:
            val, tree_local = _forest_opt(tree, blocked)
            total = acc + val
            if total > best_val:
                best_val = total
                best_edges = forced + [tree_ids[e] for e in tree_local]
            return
        rec(i + 1, blocked, forced, acc)
        eid, (u, v, w) = extras[i]
        if not blocked[u] and not blocked[v]:
            b2 = blocked.copy()
            b2[u] = b2[v] = True
            rec(i + 1, b2, forced + [eid], acc + w)

    rec(0, np.zeros(sub.n, dtype=bool), [], 0.0)
    return best_val, best_edges


@dataclass
class ExactComponentsResult:
    value: float
    matching: Matching
    solved_fraction: float
    skipped: list[tuple[int, int]]  # (vertex count, edge count) per skipped component
    solved_vertex_mask: np.ndarray


_BRUTE_FORCE_CAP = 32  # branch-and-bound stays tractable below this edge count


def exact_opt_by_components(
    g: WeightedGraph,
    component_limit: int = 30,
    excess_limit: int = 12,
) -> ExactComponentsResult:
    """Exact optimum over all components small enough to solve.

    Components with more than ``component_limit`` edges are skipped and
    reported; the rest are solved exactly: tree dynamic program when acyclic,
    off-tree-edge enumeration when the cycle excess is at most
    ``excess_limit``, branch and bound when the edge count stays within the
    tractable range.  Dense components beyond both bounds are skipped and
    reported like oversized ones.  ``solved_fraction`` is the edge fraction
    covered by solved components.
    """
    total = 0.0
    chosen: list[int] = []
    skipped: list[tuple[int, int]] = []
    solved_mask = np.zeros(g.n, dtype=bool)
    solved_edges = 0
    for comp in g.connected_components():
        if len(comp) == 1:
            solved_mask[comp[0]] = True
            continue
        if len(comp) == 2:
            # single edge: matched iff its weight is positive
            v = comp[0]
            u, eid = g.adjacency[v][0]
            w = g.edges[eid][2]
            solved_mask[comp] = True
            solved_edges += 1
            if w > 0:
                total += w
                chosen.append(eid)
            continue
        sub, _, edge_map = g.subgraph(comp)
        if sub.num_edges > component_limit:
            skipped.append((sub.n, sub.num_edges))
            continue
        excess = sub.num_edges - sub.n + 1
        if excess == 0:
            val, local = tree_opt(RootedTree(sub, 0))
            local_ids = list(local.edge_ids)
        elif excess <= excess_limit:
            val, local_ids = _sparse_cyclic_opt(sub)
        elif sub.num_edges <= _BRUTE_FORCE_CAP:
            val, lm = brute_force_opt(sub, max_edges=_BRUTE_FORCE_CAP)
            local_ids = list(lm.edge_ids)
        else:
            # dense component beyond any tractable exact search
            skipped.append((sub.n, sub.num_edges))
            continue
        total += val
        chosen.extend(edge_map[i] for i in local_ids)
        solved_mask[comp] = True
        solved_edges += sub.num_edges
    frac = solved_edges / g.num_edges if g.num_edges else 1.0
    return ExactComponentsResult(
        value=total,
        matching=Matching(g, chosen),
        solved_fraction=frac,
        skipped=skipped,
        solved_vertex_mask=solved_mask,
    )
