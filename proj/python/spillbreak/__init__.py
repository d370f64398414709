"""Spillover networks with a structural break in panel data."""

from ._core import (
    PanelData,
    SpillbreakError,
    candidate_grid,
    demean_outcome,
    demean_within,
    estimate,
    gen_dgp,
    hausdorff_ratio,
    information_criterion,
    load_csv,
    parameter_count,
    run_replications,
    sbsa_cluster,
    select_break_type,
    solve_lasso,
)

__version__ = "0.1.0"

__all__ = [
    "PanelData",
    "SpillbreakError",
    "candidate_grid",
    "demean_outcome",
    "demean_within",
    "estimate",
    "gen_dgp",
    "hausdorff_ratio",
    "information_criterion",
    "load_csv",
    "parameter_count",
    "run_replications",
    "sbsa_cluster",
    "select_break_type",
    "solve_lasso",
]
