"""Maximum-weight matchings on weighted trees and sparse random graphs via
message passing, distributional fixed points, closed-form asymptotics, and a
score-matrix rounding pipeline for finite graphs."""

from .asymptotics import (
    AsymptoticReport,
    asymptotic_report,
    degree_conditioned_match_prob,
    edge_density,
    edge_perf,
    edge_perf_quadrature,
    estimate_from_graphs,
    gap_probability,
    vertex_density,
)
from .cavity import (
    BpResult,
    MessageField,
    SelfLoopedTree,
    augment_self_loops,
    bp_iterate,
    brute_force_opt,
    decide_matching,
    exact_opt_by_components,
    field_residual,
    solve_messages_tree,
    tree_opt,
)
from .errors import (
    ConfigError,
    CoverBudgetError,
    DecompositionStalledError,
    DegenerateMatrixError,
    InconsistentMessagesError,
    InvalidMatchingError,
    NonConvergenceError,
    NotATreeError,
    SolverBudgetError,
    ToolkitError,
)
from .graphs import (
    CoverTree,
    Matching,
    MatchingStats,
    RootedTree,
    WeightedGraph,
    gen_config_model,
    gen_erdos_renyi,
    gen_path,
    matching_stats,
    read_graph,
    read_matching,
    sample_ubgw,
    universal_cover,
    write_graph,
    write_matching,
)
from .laws import DegreeLaw, Empirical, Exponential, Uniform, WeightLaw
from .rde import (
    CdfGrid,
    SamplePool,
    exp_fixed_point_K,
    inv_phi_hat,
    iterate_h,
    kolmogorov_distance,
    offspring_pgf,
    population_dynamics,
    sample_from_cdf,
)
from .rounding import (
    BvnDecomposition,
    ScoreMatrix,
    birkhoff_decompose,
    build_score_matrix,
    clip_negative_diagonal,
    extract_matching,
    load_balance,
    project_sym_birkhoff,
    rounded_performance,
    score_edge,
)

__version__ = "0.1.0"
