"""Experiment driver: seeded batch runs configured by JSON files.

Subcommands::

    cavitymatch rde      --config cfg.json --out DIR   # distributional fixed point
    cavitymatch simulate --config cfg.json --out DIR   # finite graphs vs predictions
    cavitymatch round    --config cfg.json --out DIR   # score-matrix rounding pipeline
    cavitymatch oracle   --config cfg.json --out DIR   # randomized equivalence suites

Every randomized run records its seed in the output and is reproducible
byte-for-byte from the same config.  Exit codes: 0 success, 2 validation
error, 3 budget/solver error, 4 oracle-suite failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import asymptotics, cavity, rde, rounding
from .errors import (
    ConfigError,
    CoverBudgetError,
    DecompositionStalledError,
    NonConvergenceError,
    SolverBudgetError,
    ToolkitError,
)
from .graphs import (
    RootedTree,
    WeightedGraph,
    config_model_pairing,
    gen_config_model,
    gen_erdos_renyi,
    gen_path,
    matching_stats,
    write_graph,
)
from .laws import DegreeLaw, Empirical, Exponential, Uniform, WeightLaw

SCHEMA_VERSION = 1


# ---------------------------------------------------------------------------
# Config parsing
# ---------------------------------------------------------------------------


def _require(cfg: dict, field: str, kind=None):
    if field not in cfg:
        raise ConfigError(field, "missing required field")
    val = cfg[field]
    if kind is not None and not isinstance(val, kind):
        raise ConfigError(field, f"expected {kind}, got {type(val).__name__}")
    return val


def parse_degree_law(spec: dict, field: str = "degree_law") -> DegreeLaw:
    kind = _require(spec, "kind", str)
    try:
        if kind == "poisson":
            return DegreeLaw.poisson(float(_require(spec, "rate")))
        if kind == "pmf":
            return DegreeLaw.from_pmf(_require(spec, "p", list))
        if kind == "delta":
            return DegreeLaw.delta(int(_require(spec, "k")))
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(field, str(exc)) from exc
    raise ConfigError(field, f"unknown degree law kind {kind!r}")


def parse_weight_law(spec: dict, field: str = "weight_law") -> WeightLaw:
    kind = _require(spec, "kind", str)
    try:
        if kind == "exponential":
            return Exponential(float(spec.get("rate", 1.0)))
        if kind == "uniform":
            return Uniform(float(spec.get("a", 0.0)), float(spec.get("b", 1.0)))
        if kind == "empirical":
            return Empirical(_require(spec, "samples", list))
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(field, str(exc)) from exc
    raise ConfigError(field, f"unknown weight law kind {kind!r}")


def _load_config(path: str) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError("config", str(exc)) from exc
    if cfg.get("schema") != SCHEMA_VERSION:
        raise ConfigError("schema", f"expected schema {SCHEMA_VERSION}")
    return cfg


def _graph_generator(cfg: dict, weights: WeightLaw):
    """Returns (generator(n, seed) -> graph, degree law, multigraph drop log).

    The drop log collects (self loops, parallel edges) removed by the
    configuration model's simple-graph projection, one entry per graph.
    """
    spec = _require(cfg, "generator", dict)
    kind = _require(spec, "kind", str)
    drop_log: list[tuple[int, int]] = []
    if kind == "er":
        c = float(_require(spec, "c"))
        return (lambda n, seed: gen_erdos_renyi(n, c, weights, seed)), DegreeLaw.poisson(c), drop_log
    if kind == "path":
        return (lambda n, seed: gen_path(n, weights, seed)), DegreeLaw.delta(2), drop_log
    if kind == "config_model":
        law = parse_degree_law(_require(spec, "degree_pmf", dict), "generator.degree_pmf")

        def gen(n, seed):
            rng = np.random.default_rng(np.random.SeedSequence((int(seed), 0xDE)))
            g, loops, parallel = config_model_pairing(
                law.sample_degrees(rng, n), weights, seed
            )
            drop_log.append((loops, parallel))
            return g

        return gen, law, drop_log
    raise ConfigError("generator.kind", f"unknown generator {kind!r}")


def _solve_zeta(law: DegreeLaw, weights: WeightLaw, cfg: dict) -> tuple[rde.CdfGrid, dict]:
    """Converged stationary CDF, via the closed form when weights are exponential."""
    info: dict = {}
    if isinstance(weights, Exponential):
        K, grid = rde.exp_fixed_point_K(law, weights.rate)
        info["method"] = "closed-form"
        info["K"] = K
        return grid, info
    grid_spec = cfg.get("grid")
    grid = None if grid_spec is None else (float(grid_spec["t_max"]), float(grid_spec["step"]))
    res = rde.iterate_h(
        law,
        weights,
        grid=grid,
        tol=float(cfg.get("tol", 1e-10)),
        max_iter=int(cfg.get("max_iter", 2000)),
    )
    info["method"] = "iterated-grid"
    info["residual"] = res.residual
    info["iterations"] = res.iterations
    return res.grid, info


def map_replicates(fn, count: int, threads: int) -> list:
    """Run fn(k) for k in range(count); per-replicate seeds make the result
    independent of the scheduling."""
    if threads <= 1 or count <= 1:
        return [fn(k) for k in range(count)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, range(count)))


def _write_csv(path: Path, header: list[str], rows: list) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def _write_json(path: Path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_rde(cfg: dict, out: Path, threads: int) -> int:
    law = parse_degree_law(_require(cfg, "degree_law", dict))
    weights = parse_weight_law(_require(cfg, "weight_law", dict))
    seed = int(cfg.get("seed", 0))
    grid_spec = cfg.get("grid")
    grid = None if grid_spec is None else (float(grid_spec["t_max"]), float(grid_spec["step"]))
    res = rde.iterate_h(
        law,
        weights,
        grid=grid,
        tol=float(cfg.get("tol", 1e-10)),
        max_iter=int(cfg.get("max_iter", 2000)),
    )
    pool = rde.population_dynamics(
        law,
        weights,
        pool_size=int(cfg.get("pool_size", 100_000)),
        sweeps=int(cfg.get("sweeps", 100)),
        seed=seed,
    )
    report = {
        "seed": seed,
        "h0": {"grid": res.grid.atom, "pool": pool.atom},
        "grid": {"residual": res.residual, "iterations": res.iterations,
                 "step": res.grid.step, "t_max": res.grid.t_max},
        "kolmogorov_pool_vs_grid": rde.kolmogorov_distance(pool, res.grid),
    }
    if isinstance(weights, Exponential):
        K, closed = rde.exp_fixed_point_K(law, weights.rate, grid_step=res.grid.step)
        m = min(closed.values.size, res.grid.values.size)
        report["exponential_closed_form"] = {
            "K": K,
            "h0": closed.atom,
            "sup_gap_vs_grid": float(
                np.max(np.abs(closed.values[:m] - res.grid.values[:m]))
            ),
        }
    _write_csv(out / "h.csv", ["t", "h"], list(zip(res.grid.t(), res.grid.values)))
    _write_csv(out / "pool.csv", ["z"], [(x,) for x in pool.samples])
    _write_json(out / "rde_report.json", report)
    rows = [("h0", "grid", report["h0"]["grid"], 0.0),
            ("h0", "pool", report["h0"]["pool"], 0.0)]
    if "exponential_closed_form" in report:
        rows.append(("h0", "closed-form", report["exponential_closed_form"]["h0"], 0.0))
    _write_csv(out / "rde_report.csv", ["name", "method", "value", "stderr"], rows)
    return 0


def cmd_simulate(cfg: dict, out: Path, threads: int) -> int:
    weights = parse_weight_law(_require(cfg, "weight_law", dict))
    gen, law, drop_log = _graph_generator(cfg, weights)
    seed = int(cfg.get("seed", 0))
    sizes = [int(n) for n in _require(cfg, "sizes", list)]
    replicates = int(_require(cfg, "replicates"))
    limit = int(cfg.get("component_limit", 30))
    rows: list[asymptotics.StatRow] = []
    if replicates > 0:
        zeta, info = _solve_zeta(law, weights, cfg)
        rows = asymptotics.estimate_from_graphs(
            gen, sizes, replicates, seed, law, weights, zeta, component_limit=limit
        )
    _write_csv(
        out / "simulate.csv",
        ["size", "name", "value", "stderr", "prediction", "zscore", "method"],
        [(r.size, r.name, r.value, r.stderr, r.prediction, r.zscore, r.method) for r in rows],
    )
    report = {
        "seed": seed,
        "sizes": sizes,
        "replicates": replicates,
        "rows": [r.__dict__ for r in rows],
    }
    if drop_log:
        report["config_model_dropped"] = {
            "self_loops": sum(d[0] for d in drop_log),
            "parallel_edges": sum(d[1] for d in drop_log),
        }
    _write_json(out / "simulate_report.json", report)
    return 0


def cmd_round(cfg: dict, out: Path, threads: int) -> int:
    weights = parse_weight_law(_require(cfg, "weight_law", dict))
    gen, law, _ = _graph_generator(cfg, weights)
    seed = int(cfg.get("seed", 0))
    n = int(_require(cfg, "n"))
    H = int(cfg.get("H", 3))
    g = gen(n, seed)
    zeta, zinfo = _solve_zeta(law, weights, cfg)
    x = cfg.get("x")
    sm = rounding.build_score_matrix(
        g,
        zeta,
        H=H,
        x=None if x is None else float(x),
        replicates=int(cfg.get("replicates", 400)),
        seed=seed,
        cover_budget=int(cfg.get("cover_budget", 20_000)),
    )
    clipped, clip_mass = rounding.clip_negative_diagonal(sm)
    projected = rounding.project_sym_birkhoff(clipped)
    decomp = rounding.birkhoff_decompose(
        projected,
        tol=float(cfg.get("bvn_tol", 1e-6)),
        max_terms=int(cfg.get("max_terms", 20_000)),
    )
    extracted = rounding.extract_matching(decomp, g, seed)
    exact = cavity.exact_opt_by_components(g, component_limit=int(cfg.get("component_limit", 30)))
    stats = matching_stats(g, exact.matching)
    diag = np.diag(sm.q)
    report = {
        "seed": seed,
        "n": n,
        "H": H,
        "x": sm.meta["x"],
        "zeta": zinfo,
        "score_matrix": {
            "negative_diagonal_mass": float(-diag[diag < 0].sum()) if np.any(diag < 0) else 0.0,
            "clipped_mass": clip_mass,
            "depth_reductions": sm.meta["depth_reductions"],
        },
        "projection": {
            "row_sum_dev": float(np.max(np.abs(projected.sum(axis=1) - 1.0))),
            "col_sum_dev": float(np.max(np.abs(projected.sum(axis=0) - 1.0))),
            "asymmetry": float(np.max(np.abs(projected - projected.T))),
            "l1_distance_to_scores": float(np.abs(projected - sm.q).sum()),
        },
        "bvn": {"terms": len(decomp.terms), "residual_l1": decomp.residual_l1},
        "extracted_matching": {
            "edges": len(extracted.edge_ids),
            "weight": extracted.total_weight(g),
        },
        "performance": {
            "rounded": rounding.rounded_performance(sm, g),
            "exact_perf_v": stats.perf_v,
            "exact_solved_fraction": exact.solved_fraction,
        },
    }
    _write_json(out / "round_report.json", report)
    if cfg.get("write_matrix", False):
        rounding.write_score_matrix(out / "score_matrix.csv", sm)
    if cfg.get("write_graph", False):
        write_graph(out / "graph.txt", g)
    return 0


def _random_tree(n: int, weights: WeightLaw, rng: np.random.Generator) -> WeightedGraph:
    edges = []
    ws = weights.sample(rng, max(n - 1, 0))
    for v in range(1, n):
        edges.append((int(rng.integers(0, v)), v, float(ws[v - 1])))
    return WeightedGraph(n, edges)


def cmd_oracle(cfg: dict, out: Path, threads: int) -> int:
    suites = cfg.get("suites", {})
    seed = int(cfg.get("seed", 0))
    failures: list[dict] = []
    summary: dict = {"seed": seed}

    tree_cfg = suites.get("trees")
    if tree_cfg:
        count = int(tree_cfg.get("count", 1000))
        nmax = int(tree_cfg.get("max_vertices", 12))
        laws = [parse_weight_law({"kind": k}) for k in tree_cfg.get("weight_laws", ["uniform", "exponential"])]

        def run_tree(k: int):
            rng = np.random.default_rng(np.random.SeedSequence((seed + k, 0x7E)))
            n = int(rng.integers(2, nmax + 1))
            g = _random_tree(n, laws[k % len(laws)], rng)
            t = RootedTree(g, 0)
            dp_val, _ = cavity.tree_opt(t)
            bf_val, _ = cavity.brute_force_opt(g)
            bp_val = cavity.decide_matching(t, cavity.solve_messages_tree(t)).total_weight(g)
            ok = abs(dp_val - bf_val) <= 1e-9 and abs(bp_val - bf_val) <= 1e-9
            return ok, g, (dp_val, bf_val, bp_val)

        results = map_replicates(run_tree, count, threads)
        bad = [(g, vals) for ok, g, vals in results if not ok]
        summary["trees"] = {"count": count, "failures": len(bad)}
        for g, vals in bad[:5]:
            failures.append({
                "suite": "trees",
                "values": {"tree_opt": vals[0], "brute_force": vals[1], "decided": vals[2]},
                "graph": {"n": g.n, "edges": [list(e) for e in g.edges]},
            })

    cycle_cfg = suites.get("cycles")
    if cycle_cfg:
        count = int(cycle_cfg.get("count", 200))
        nmax = int(cycle_cfg.get("max_vertices", 12))

        def run_cycle(k: int):
            rng = np.random.default_rng(np.random.SeedSequence((seed + k, 0xC7)))
            n = 2 * int(rng.integers(2, nmax // 2 + 1))  # even cycles
            ws = rng.random(n)
            g = WeightedGraph(n, [(i, (i + 1) % n, float(ws[i])) for i in range(n)])
            res = cavity.bp_iterate(g, sweeps=500, damping=0.5, tol=1e-12)
            if not res.converged:
                return False, g, ("non-converged", res.residual)
            val = cavity.decide_matching(g, res.field).total_weight(g)
            bf_val, _ = cavity.brute_force_opt(g)
            return abs(val - bf_val) <= 1e-9, g, (val, bf_val)

        results = map_replicates(run_cycle, count, threads)
        bad = [(g, vals) for ok, g, vals in results if not ok]
        summary["cycles"] = {"count": count, "failures": len(bad)}
        for g, vals in bad[:5]:
            failures.append({
                "suite": "cycles",
                "values": list(vals),
                "graph": {"n": g.n, "edges": [list(e) for e in g.edges]},
            })

    summary["ok"] = not failures
    _write_json(out / "oracle_report.json", summary)
    if failures:
        _write_json(out / "oracle_counterexamples.json", failures)
        return 4
    return 0


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

_COMMANDS = {
    "rde": cmd_rde,
    "simulate": cmd_simulate,
    "round": cmd_round,
    "oracle": cmd_oracle,
}


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="cavitymatch", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON config file")
        p.add_argument("--seed", type=int, default=None, help="override config seed")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--threads", type=int, default=1, help="replicate worker count")
    args = parser.parse_args(argv)
    try:
        cfg = _load_config(args.config)
        if args.seed is not None:
            cfg["seed"] = args.seed
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        return _COMMANDS[args.command](cfg, out, args.threads)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (SolverBudgetError, CoverBudgetError, NonConvergenceError,
            DecompositionStalledError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return 3
    except ToolkitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
