"""Finite-graph rounding pipeline: per-edge scores, bistochastic projection,
permutation decomposition, matching extraction.

Each edge of a finite graph is scored with the probability that the message
decision rule keeps it, computed on its depth-H universal-cover neighbourhood
with boundary messages drawn from the stationary law.  The scores, completed
on the diagonal to unit row sums, are projected onto symmetric bistochastic
matrices by load balancing, decomposed into permutation matrices, and sampled
into matchings.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_bipartite_matching

from .errors import (
    CoverBudgetError,
    DecompositionStalledError,
    DegenerateMatrixError,
)
from .graphs import CoverTree, Matching, WeightedGraph, universal_cover
from .rde import CdfGrid, _inverse_cdf

__all__ = [
    "ScoreMatrix",
    "BvnDecomposition",
    "score_edge",
    "build_score_matrix",
    "clip_negative_diagonal",
    "load_balance",
    "project_sym_birkhoff",
    "birkhoff_decompose",
    "extract_matching",
    "rounded_performance",
    "write_score_matrix",
]


@dataclass
class ScoreMatrix:
    """Symmetric matrix of edge-inclusion scores with completed diagonal.

    Off-diagonal entries lie in [0, 1] (one Monte-Carlo score per undirected
    edge, used for both orientations, so symmetry is exact); each diagonal
    entry is one minus its row's off-diagonal sum and may be negative.
    """

    n: int
    q: np.ndarray
    meta: dict = field(default_factory=dict)


@dataclass
class BvnDecomposition:
    """Convex combination of permutation matrices approximating a matrix."""

    terms: list[tuple[float, np.ndarray]]
    residual_l1: float

    def reconstruct(self, n: int) -> np.ndarray:
        out = np.zeros((n, n))
        for lam, perm in self.terms:
            out[np.arange(n), perm] += lam
        return out

    def to_json(self) -> str:
        return json.dumps(
            {
                "residual_l1": self.residual_l1,
                "terms": [
                    {"weight": lam, "permutation": perm.tolist()}
                    for lam, perm in self.terms
                ],
            }
        )


# ---------------------------------------------------------------------------
# Edge scores
# ---------------------------------------------------------------------------


def score_edge(
    cover: CoverTree,
    zeta: CdfGrid,
    x: float,
    replicates: int = 400,
    seed: int = 0,
) -> float:
    """Probability that the rooted edge is kept, with weight at most x.

    Per replicate, the upward messages of truncated horizon vertices are drawn
    iid from the stationary law and the recursion is run inward; the score is
    the empirical frequency of z(o-, o+) + z(o+, o-) < w(o) <= x.  Fully
    unrolled covers have no boundary and the score is deterministic.
    """
    g = cover.tree.graph
    w_root = g.edges[0][2]
    if not (w_root <= x):
        return 0.0
    order, parent = cover.tree.bfs()
    children: list[list[tuple[int, float]]] = [[] for _ in range(g.n)]
    for eid_, (a, b, w) in enumerate(g.edges):
        if eid_ == 0:
            continue
        if parent[b] == a:
            children[a].append((b, w))
        else:
            children[b].append((a, w))
    n_trunc = int(cover.truncated.sum())
    R = replicates if n_trunc else 1
    draws = None
    if n_trunc:
        rng = np.random.default_rng(np.random.SeedSequence((int(seed), 0x5E)))
        draws = _inverse_cdf(zeta, rng.random((n_trunc, R)))
    trunc_slot = np.cumsum(cover.truncated) - 1
    m: list[np.ndarray | None] = [None] * g.n
    zero = np.zeros(R)

    def message(v: int, skip: int = -1) -> np.ndarray:
        if cover.truncated[v]:
            return draws[trunc_slot[v]]
        best = zero
        for (c, w) in children[v]:
            if c == skip:
                continue
            best = np.maximum(best, w - m[c])
        return best

    for idx in range(g.n - 1, 0, -1):
        v = int(order[idx])
        m[v] = message(v)
    z_plus = m[1]
    z_minus = message(0, skip=1)
    return float(np.mean(z_minus + z_plus < w_root))


def build_score_matrix(
    g: WeightedGraph,
    zeta: CdfGrid,
    H: int,
    x: float | None = None,
    replicates: int = 400,
    seed: int = 0,
    cover_budget: int = 20_000,
) -> ScoreMatrix:
    """One score per undirected edge (exact symmetry), diagonal completed.

    ``x`` defaults to the empirical 99th percentile of the observed weights.
    Non-edges score 0; the diagonal entry of row j is 1 minus the row's
    off-diagonal sum.  Edge e is scored with its own stream (seed xor e).
    Edges whose cover exceeds the vertex budget are retried at reduced depth;
    the reductions are recorded in ``meta['depth_reductions']``.
    """
    if x is None:
        ws = g.weights()
        x = float(np.quantile(ws, 0.99)) if ws.size else 0.0
    q = np.zeros((g.n, g.n))
    reductions: list[tuple[int, int]] = []
    for eid, (u, v, _) in enumerate(g.edges):
        h_used = H
        while True:
            try:
                cover = universal_cover(g, (u, v), h_used, max_vertices=cover_budget)
                break
            except CoverBudgetError:
                if h_used == 0:
                    raise
                h_used -= 1
        if h_used != H:
            reductions.append((eid, h_used))
        s = score_edge(cover, zeta, x, replicates=replicates, seed=int(seed) ^ eid)
        q[u, v] = q[v, u] = s
    diag = 1.0 - q.sum(axis=1)
    q[np.arange(g.n), np.arange(g.n)] = diag
    return ScoreMatrix(
        n=g.n,
        q=q,
        meta={
            "H": H,
            "x": x,
            "replicates": replicates,
            "seed": seed,
            "cover_budget": cover_budget,
            "depth_reductions": reductions,
        },
    )


def clip_negative_diagonal(sm: ScoreMatrix) -> tuple[np.ndarray, float]:
    """Zero out negative diagonal entries; returns (matrix, clipped mass)."""
    q = sm.q.copy()
    d = np.diag(q).copy()
    clipped = float(-d[d < 0].sum()) if np.any(d < 0) else 0.0
    np.fill_diagonal(q, np.maximum(d, 0.0))
    return q, clipped


# ---------------------------------------------------------------------------
# Load balancing and projection
# ---------------------------------------------------------------------------


def _transfer(mat: np.ndarray, sums: np.ndarray, target: float, axis: int) -> None:
    """Equalise line sums along ``axis`` by moving mass along the other axis.

    axis=0 equalises row sums moving within columns (column sums preserved);
    axis=1 the transpose statement.  Donor lines are drained largest-first
    into the neediest receivers, taking from their largest entries, so every
    unit of mass moves exactly once and no entry goes negative.
    """
    d = sums.size
    eps = 1e-15 * d * max(1.0, abs(target))
    donors = sorted(
        (i for i in range(d) if sums[i] > target), key=lambda i: (-sums[i], i)
    )
    receivers = sorted(
        (i for i in range(d) if sums[i] < target), key=lambda i: (sums[i], i)
    )
    di = ri = 0
    while di < len(donors) and ri < len(receivers):
        i, r = donors[di], receivers[ri]
        excess = sums[i] - target
        deficit = target - sums[r]
        if excess <= eps:
            di += 1
            continue
        if deficit <= eps:
            ri += 1
            continue
        amount = min(excess, deficit)
        remaining = amount
        line = mat[i, :] if axis == 0 else mat[:, i]
        for j in np.argsort(-line, kind="stable"):
            if remaining <= 0:
                break
            take = min(float(line[j]), remaining)
            if take <= 0:
                break
            if axis == 0:
                mat[i, j] -= take
                mat[r, j] += take
            else:
                mat[j, i] -= take
                mat[j, r] += take
            remaining -= take
        moved = amount - max(remaining, 0.0)
        sums[i] -= moved
        sums[r] += moved
        if moved <= 0:  # numerically drained donor, avoid stalling
            di += 1


def load_balance(m: np.ndarray) -> tuple[np.ndarray, float]:
    """Project a nonnegative matrix onto bistochastic matrices by mass moves.

    Row sums are equalised at their average by moves within columns (column
    sums preserved), then column sums by moves within rows, then the matrix is
    scaled by the common line sum.  The total L1 change obeys
    ||s - m||_1 <= 12 d eps whenever the summed row and column deviations from
    1 are below d eps with eps < 1/2.
    """
    a = np.asarray(m, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("need a square matrix")
    if np.any(a < 0):
        raise ValueError("entries must be nonnegative")
    rows = a.sum(axis=1)
    cols = a.sum(axis=0)
    if np.any(rows == 0) or np.any(cols == 0):
        raise DegenerateMatrixError("zero row or column sum")
    work = a.copy()
    lhat = float(rows.mean())
    _transfer(work, rows.copy(), lhat, axis=0)
    _transfer(work, work.sum(axis=0), lhat, axis=1)
    out = work / lhat
    return out, float(np.abs(out - a).sum())


def project_sym_birkhoff(m: np.ndarray) -> np.ndarray:
    """Load-balance then symmetrise: output symmetric with unit line sums.

    Averaging a bistochastic matrix with its transpose preserves both line
    sums, so the result stays in the symmetric part of the polytope.
    """
    b, _ = load_balance(m)
    return 0.5 * (b + b.T)


# ---------------------------------------------------------------------------
# Birkhoff-von Neumann decomposition
# ---------------------------------------------------------------------------


def _augment(adj: list[dict[int, float]], row: int, match_col: np.ndarray,
             match_row: np.ndarray) -> bool:
    """Breadth-first alternating-path search to rematch a freed row."""
    parent_col: dict[int, int] = {}
    frontier = [row]
    while frontier:
        next_rows = []
        for r in frontier:
            for c in adj[r]:
                if c in parent_col:
                    continue
                parent_col[c] = r
                owner = int(match_row[c])
                if owner < 0:
                    col = c
                    while True:
                        r2 = parent_col[col]
                        prev = int(match_col[r2])
                        match_col[r2] = col
                        match_row[col] = r2
                        if r2 == row:
                            return True
                        col = prev
                next_rows.append(owner)
        frontier = [r for r in next_rows if r >= 0]
    return False


def birkhoff_decompose(
    s: np.ndarray,
    tol: float = 1e-6,
    max_terms: int = 20_000,
) -> BvnDecomposition:
    """Greedy decomposition of a bistochastic matrix into permutations.

    Repeatedly finds a perfect matching on the support (entries above tol/n),
    subtracts the minimum matched entry, and stops when the residual L1 mass
    falls below ``tol`` or ``max_terms`` is reached.  Raises
    :class:`DecompositionStalledError` when no perfect matching exists on the
    remaining support.
    """
    a = np.asarray(s, dtype=float)
    n = a.shape[0]
    if a.ndim != 2 or a.shape[1] != n:
        raise ValueError("need a square matrix")
    dev = max(
        float(np.max(np.abs(a.sum(axis=1) - 1.0))),
        float(np.max(np.abs(a.sum(axis=0) - 1.0))),
    )
    if dev > 1e-6:
        raise ValueError(f"matrix is not bistochastic within 1e-6 (deviation {dev:.2e})")
    thr = tol / n
    work = a.copy()
    small = work <= thr
    dust = float(work[small & (work > 0)].sum())
    work[small] = 0.0
    adj: list[dict[int, float]] = [
        {int(j): float(work[i, j]) for j in np.flatnonzero(work[i])} for i in range(n)
    ]
    perm0 = maximum_bipartite_matching(csr_matrix(work > 0), perm_type="column")
    match_col = np.asarray(perm0, dtype=np.int64)
    if np.any(match_col < 0):
        raise DecompositionStalledError(
            "no perfect matching on the initial support; input too far from bistochastic"
        )
    match_row = np.full(n, -1, dtype=np.int64)
    match_row[match_col] = np.arange(n)

    terms: list[tuple[float, np.ndarray]] = []
    active = float(work.sum())
    while active + dust > tol and len(terms) < max_terms:
        lam = min(adj[i][int(match_col[i])] for i in range(n))
        terms.append((lam, match_col.astype(np.int32).copy()))
        active -= lam * n
        broken: list[int] = []
        for i in range(n):
            c = int(match_col[i])
            v = adj[i][c] - lam
            if v <= 0.0:
                del adj[i][c]
                match_col[i] = -1
                match_row[c] = -1
                broken.append(i)
            else:
                adj[i][c] = v
        if active + dust <= tol or len(terms) >= max_terms:
            break
        for i in broken:
            if not _augment(adj, i, match_col, match_row):
                raise DecompositionStalledError(
                    f"no perfect matching after {len(terms)} terms "
                    f"(residual {active + dust:.3e})"
                )
    # drift-free residual: remaining support mass plus the initially dropped dust
    left = float(sum(sum(row.values()) for row in adj))
    return BvnDecomposition(terms=terms, residual_l1=left + dust)


# ---------------------------------------------------------------------------
# Matching extraction and performance
# ---------------------------------------------------------------------------


def extract_matching(d: BvnDecomposition, g: WeightedGraph, seed: int = 0) -> Matching:
    """Sample one permutation (weight-proportional), read off a matching.

    The permutation or its inverse is taken with equal probability, then
    decomposed into cycles: fixed points stay unmatched, 2-cycles become the
    corresponding edge when present, and longer cycles contribute alternate
    pairs starting from their minimum-index vertex; pairs that are not edges
    of the graph are dropped.  The result always satisfies the matching
    invariant.
    """
    if not d.terms:
        return Matching.empty(g)
    rng = np.random.default_rng(np.random.SeedSequence((int(seed), 0xEC)))
    lams = np.array([t[0] for t in d.terms])
    k = int(rng.choice(lams.size, p=lams / lams.sum()))
    perm = d.terms[k][1].astype(np.int64)
    if rng.random() < 0.5:
        inv = np.empty_like(perm)
        inv[perm] = np.arange(perm.size)
        perm = inv
    seen = np.zeros(perm.size, dtype=bool)
    pairs: list[tuple[int, int]] = []
    for start in range(perm.size):
        if seen[start]:
            continue
        cycle = [start]
        seen[start] = True
        nxt = int(perm[start])
        while nxt != start:
            cycle.append(nxt)
            seen[nxt] = True
            nxt = int(perm[nxt])
        for i in range(0, len(cycle) - 1, 2):
            pairs.append((cycle[i], cycle[i + 1]))
    ids = [g.edge_id(u, v) for (u, v) in pairs]
    return Matching(g, [e for e in ids if e is not None])


def rounded_performance(q: ScoreMatrix, g: WeightedGraph) -> float:
    """Score-weighted matched weight per vertex: (1/n) sum_{i != j} q_ij w_ij."""
    if q.n != g.n:
        raise ValueError("dimension mismatch")
    total = 0.0
    for (u, v, w) in g.edges:
        total += 2.0 * q.q[u, v] * w
    return total / g.n if g.n else 0.0


def write_score_matrix(path, sm: ScoreMatrix, sparse_threshold: int = 5000) -> None:
    """Dense CSV for small matrices, "i,j,q" triplets above the threshold."""
    if sm.n <= sparse_threshold:
        np.savetxt(path, sm.q, delimiter=",")
    else:
        with open(path, "w") as fh:
            fh.write("i,j,q\n")
            for i, j in zip(*np.nonzero(sm.q)):
                fh.write(f"{i},{j},{sm.q[i, j]!r}\n")
