"""Scribble-seeded multi-label Potts segmentation on pixel or superpixel graphs.

Per-label connectivity is enforced exactly through lazily separated rooted
vertex-separator cuts inside a branch-and-bound search. A greedy region-fusion
heuristic provides warm starts, and the relaxed variants (no-connectivity ILP,
LP relaxation, background-exempt ILP) are exposed for side-by-side comparison.
"""

from mrfseg.imagegraph import (
    RasterImage,
    RagGraph,
    SuperpixelConfig,
    load_image,
    build_grid_graph,
    build_superpixel_rag,
)
from mrfseg.scribbles import (
    ScribbleSet,
    UnaryField,
    parse_scribbles,
    scribbles_from_nodes,
    seed_means,
    unary_from_means,
    unary_from_probmap,
)
from mrfseg.model import (
    MrfInstance,
    Labeling,
    VariableSpace,
    build_instance,
    lower_model,
    energy,
    extract_labeling,
)
from mrfseg.lp import LpProblem, LpSolution, solve_lp, add_rows_and_resolve, tighten_bound_and_resolve
from mrfseg.separation import SeparatorCut, components_of_label, knearest_separators, separate_all
from mrfseg.branch_cut import SolveLimits, SolveResult, solve
from mrfseg.region_fusion import FusionState, init_state, merge_predicate, run_fusion
from mrfseg.oracle import OracleResult, brute_force, connectivity_check

__all__ = [
    "RasterImage",
    "RagGraph",
    "SuperpixelConfig",
    "load_image",
    "build_grid_graph",
    "build_superpixel_rag",
    "ScribbleSet",
    "UnaryField",
    "parse_scribbles",
    "scribbles_from_nodes",
    "seed_means",
    "unary_from_means",
    "unary_from_probmap",
    "MrfInstance",
    "Labeling",
    "VariableSpace",
    "build_instance",
    "lower_model",
    "energy",
    "extract_labeling",
    "LpProblem",
    "LpSolution",
    "solve_lp",
    "add_rows_and_resolve",
    "tighten_bound_and_resolve",
    "SeparatorCut",
    "components_of_label",
    "knearest_separators",
    "separate_all",
    "SolveLimits",
    "SolveResult",
    "solve",
    "FusionState",
    "init_state",
    "merge_predicate",
    "run_fusion",
    "OracleResult",
    "brute_force",
    "connectivity_check",
]
