"""Least squares, L1 model selection, thresholding and re-solve, and the L0 oracle."""

from .lsq import GaugeError, InfeasibleError, solve_inequality_ls, solve_least_squares
from .merge import (
    LayoutStructure,
    MergeError,
    MergeSet,
    ResolvedModel,
    collapse_and_resolve,
    merge_classes,
    model_extents,
    threshold_equivalences,
)
from .oracle import OracleResult, brute_force_l0
from .selection import ConvexSolution, compute_delta, kkt_ok, kkt_residuals, solve_sparse_selection

__all__ = [
    "ConvexSolution",
    "GaugeError",
    "InfeasibleError",
    "LayoutStructure",
    "MergeError",
    "MergeSet",
    "OracleResult",
    "ResolvedModel",
    "brute_force_l0",
    "collapse_and_resolve",
    "compute_delta",
    "kkt_ok",
    "kkt_residuals",
    "merge_classes",
    "model_extents",
    "solve_inequality_ls",
    "solve_least_squares",
    "solve_sparse_selection",
    "threshold_equivalences",
]
