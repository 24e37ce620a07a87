"""Closed-form limit statistics of the optimal matching, with Monte-Carlo twins.

All formulas are driven by the atom h0 of the stationary message law and the
degree generating functions: with x* = inv_phi_hat(h0),

    edge density    = (1 - phi(x*)) / phi'(1)
    vertex density  = 1 - phi(x*)
    P(matched | deg = k) = 1 - x*^k

and the matched weight per edge is E[W 1{Z + Z' < W}] for independent Z, Z'
from the message law.  Every closed form has an independent Monte-Carlo or
quadrature estimator for cross-validation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .cavity import exact_opt_by_components
from .graphs import WeightedGraph
from .laws import DegreeLaw, WeightLaw
from .rde import CdfGrid, SamplePool, _inverse_cdf, inv_phi_hat

__all__ = [
    "edge_perf",
    "edge_perf_quadrature",
    "edge_density",
    "vertex_density",
    "degree_conditioned_match_prob",
    "gap_probability",
    "estimate_from_graphs",
    "matched_fraction_by_degree",
    "AsymptoticReport",
    "StatRow",
    "asymptotic_report",
]


def _draw(zeta: CdfGrid | SamplePool, rng: np.random.Generator, size: int) -> np.ndarray:
    if isinstance(zeta, CdfGrid):
        return _inverse_cdf(zeta, rng.random(size))
    return zeta.samples[rng.integers(0, zeta.samples.size, size)]


def _atom(zeta: CdfGrid | SamplePool) -> float:
    return zeta.atom


def edge_perf(
    zeta: CdfGrid | SamplePool,
    weights: WeightLaw,
    replicates: int = 200_000,
    seed: int = 0,
) -> tuple[float, float]:
    """Monte-Carlo estimate of E[W 1{Z + Z' < W}] with its standard error."""
    rng = np.random.default_rng(np.random.SeedSequence((int(seed), 0xEF)))
    z = _draw(zeta, rng, replicates)
    z2 = _draw(zeta, rng, replicates)
    w = weights.sample(rng, replicates)
    x = w * (z + z2 < w)
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(replicates))


def edge_perf_quadrature(zeta: CdfGrid, weights: WeightLaw) -> float:
    """Quadrature twin of :func:`edge_perf` on a grid CDF.

    The law of Z + Z' is the discrete self-convolution of the grid masses;
    E[W 1{W > s}] is evaluated exactly per weight-law kind.
    """
    p = zeta.masses()
    conv = np.convolve(p, p)
    s = np.arange(conv.size) * zeta.step
    return float(np.dot(conv, np.asarray(weights.mean_above(s), dtype=float)))


def edge_density(law: DegreeLaw, h0: float) -> float:
    """Probability that a uniform edge is matched: (1 - phi(x*)) / phi'(1)."""
    if not (0.0 < h0 <= 1.0):
        raise ValueError("h0 must be in (0, 1]")
    return (1.0 - law.phi(inv_phi_hat(law, h0))) / law.mean


def vertex_density(law: DegreeLaw, h0: float) -> float:
    """Probability that a uniform vertex is matched: 1 - phi(x*)."""
    if not (0.0 < h0 <= 1.0):
        raise ValueError("h0 must be in (0, 1]")
    return 1.0 - law.phi(inv_phi_hat(law, h0))


def degree_conditioned_match_prob(law: DegreeLaw, h0: float, k: int) -> float:
    """Probability that a degree-k vertex is matched: 1 - x*^k."""
    if k < 0:
        raise ValueError("k must be >= 0")
    if k == 0:
        return 0.0
    return 1.0 - inv_phi_hat(law, h0) ** k


def gap_probability(
    zeta: CdfGrid | SamplePool,
    weights: WeightLaw,
    law: DegreeLaw,
    k: int,
    replicates: int = 200_000,
    seed: int = 0,
) -> tuple[float, float]:
    """Probability that none of the k far-side children of a matched edge is matched.

    Conditioned on a directed matched edge whose far endpoint has k children,
    the joint event probability factorises as h0^k E[1{W >= Z} F_w(W - Z)^k]
    and the conditioning event (matched, far degree k + 1) has probability
    (1 - x*^(k+1)) / (k+1), giving

        (k + 1) h0^k E[1{W >= Z} F_w(W - Z)^k] / (1 - x*^(k+1)).

    The expectation is estimated by Monte Carlo; the two-regular limit with
    unit-rate exponential weights gives exactly 1/4 at k = 1, confirmed by
    direct event counting on exact path matchings.  k = 0 is the vacuous gap
    and returns probability 1 exactly.
    """
    if k < 0:
        raise ValueError("k must be >= 0")
    if k == 0:
        return 1.0, 0.0
    h0 = _atom(zeta)
    xstar = inv_phi_hat(law, h0)
    denom = 1.0 - xstar ** (k + 1)
    if denom <= 0:
        raise ValueError("degenerate conditioning: matched edges of this degree are null")
    pref = (k + 1) * h0**k / denom
    rng = np.random.default_rng(np.random.SeedSequence((int(seed), 0x6A)))
    z = _draw(zeta, rng, replicates)
    w = weights.sample(rng, replicates)
    term = np.where(w >= z, np.asarray(weights.cdf(w - z)) ** k, 0.0)
    return (
        float(pref * term.mean()),
        float(pref * term.std(ddof=1) / math.sqrt(replicates)),
    )


# ---------------------------------------------------------------------------
# Finite-graph estimation against the predictions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StatRow:
    size: int
    name: str
    value: float
    stderr: float
    prediction: float
    zscore: float
    method: str = "exact-components"


def estimate_from_graphs(
    generator,
    sizes: list[int],
    replicates: int,
    seed: int,
    law: DegreeLaw,
    weights: WeightLaw,
    zeta: CdfGrid,
    component_limit: int = 30,
) -> list[StatRow]:
    """Exact finite-graph matching statistics against the asymptotic predictions.

    ``generator(n, seed)`` must return a :class:`WeightedGraph`.  For each
    size, per-replicate statistics are computed on the exactly solved
    components only (matched-edge density, weight per edge, matched-vertex
    fraction) and compared to the closed-form predictions.  Replicate k of a
    run uses seed ``seed + k``.
    """
    h0 = zeta.atom
    predictions = {
        "edge_density": edge_density(law, h0),
        "weight_per_edge": edge_perf_quadrature(zeta, weights),
        "vertex_density": vertex_density(law, h0),
    }
    rows: list[StatRow] = []
    for n in sizes:
        acc: dict[str, list[float]] = {k: [] for k in predictions}
        for rep in range(replicates):
            g = generator(n, seed + rep)
            res = exact_opt_by_components(g, component_limit=component_limit)
            mask = res.solved_vertex_mask
            solved_edges = sum(
                1 for (u, v, _) in g.edges if mask[u] and mask[v]
            )
            matched = res.matching.edge_ids
            if solved_edges:
                acc["edge_density"].append(len(matched) / solved_edges)
                acc["weight_per_edge"].append(res.value / solved_edges)
            n_solved = int(mask.sum())
            if n_solved:
                acc["vertex_density"].append(2.0 * len(matched) / n_solved)
        for name, vals in acc.items():
            if not vals:
                continue
            arr = np.asarray(vals)
            mean = float(arr.mean())
            stderr = float(arr.std(ddof=1) / math.sqrt(arr.size)) if arr.size > 1 else 0.0
            pred = predictions[name]
            if stderr > 0:
                z = (mean - pred) / stderr
            else:
                z = 0.0 if mean == pred else math.copysign(math.inf, mean - pred)
            rows.append(StatRow(n, name, mean, stderr, pred, float(z)))
    return rows


def matched_fraction_by_degree(
    g: WeightedGraph,
    matching,
    ks: list[int],
    vertex_mask: np.ndarray | None = None,
) -> dict[int, tuple[float, int]]:
    """Fraction of degree-k vertices that are matched, with the sample count."""
    degs = g.degrees()
    out: dict[int, tuple[float, int]] = {}
    for k in ks:
        sel = degs == k
        if vertex_mask is not None:
            sel &= vertex_mask
        count = int(sel.sum())
        if count == 0:
            out[k] = (math.nan, 0)
            continue
        hits = sum(1 for v in np.flatnonzero(sel) if matching.partner[v] is not None)
        out[k] = (hits / count, count)
    return out


# ---------------------------------------------------------------------------
# Bundled report
# ---------------------------------------------------------------------------


@dataclass
class AsymptoticReport:
    """Every closed-form limit statistic with its cross-validation twin."""

    h0: float
    edge_perf_quadrature: float
    edge_perf_mc: tuple[float, float]
    edge_density: float
    edge_density_mc: tuple[float, float]
    vertex_density: float
    degree_match_prob: dict[int, float] = field(default_factory=dict)
    gap_prob: dict[int, tuple[float, float]] = field(default_factory=dict)

    def consistency_gap(self, law: DegreeLaw) -> float:
        """|vertex_density - mean_degree * edge_density| (identically 0)."""
        return abs(self.vertex_density - law.mean * self.edge_density)

    def rows(self) -> list[tuple[str, str, float, float]]:
        out = [
            ("h0", "grid", self.h0, 0.0),
            ("edge_perf", "quadrature", self.edge_perf_quadrature, 0.0),
            ("edge_perf", "monte-carlo", *self.edge_perf_mc),
            ("edge_density", "closed-form", self.edge_density, 0.0),
            ("edge_density", "monte-carlo", *self.edge_density_mc),
            ("vertex_density", "closed-form", self.vertex_density, 0.0),
        ]
        for k, v in sorted(self.degree_match_prob.items()):
            out.append((f"match_prob_deg_{k}", "closed-form", v, 0.0))
        for k, (v, se) in sorted(self.gap_prob.items()):
            out.append((f"gap_prob_k_{k}", "monte-carlo", v, se))
        return out


def asymptotic_report(
    law: DegreeLaw,
    weights: WeightLaw,
    zeta: CdfGrid,
    degrees: list[int] = (1, 2, 3),
    gap_ks: list[int] = (1, 2),
    replicates: int = 200_000,
    seed: int = 0,
) -> AsymptoticReport:
    """Evaluate all closed-form limit statistics from a converged grid CDF."""
    h0 = zeta.atom
    rng_seed = int(seed)
    mc_perf = edge_perf(zeta, weights, replicates, rng_seed)
    rng = np.random.default_rng(np.random.SeedSequence((rng_seed, 0xED)))
    z = _inverse_cdf(zeta, rng.random(replicates))
    z2 = _inverse_cdf(zeta, rng.random(replicates))
    w = weights.sample(rng, replicates)
    ind = (z + z2 < w).astype(float)
    dens_mc = (
        float(ind.mean()),
        float(ind.std(ddof=1) / math.sqrt(replicates)),
    )
    return AsymptoticReport(
        h0=h0,
        edge_perf_quadrature=edge_perf_quadrature(zeta, weights),
        edge_perf_mc=mc_perf,
        edge_density=edge_density(law, h0),
        edge_density_mc=dens_mc,
        vertex_density=vertex_density(law, h0),
        degree_match_prob={
            k: degree_conditioned_match_prob(law, h0, k) for k in degrees
        },
        gap_prob={
            k: gap_probability(zeta, weights, law, k, replicates, rng_seed)
            for k in gap_ks
        },
    )
