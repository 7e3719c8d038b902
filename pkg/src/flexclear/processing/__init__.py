"""Network construction, bid generation, market clearing and analysis."""

from flexclear.processing.analysis import (
    ComparisonError,
    DimensionError,
    comparison_table,
    compare_deterministic,
    normalize_reports,
    rmse,
)
from flexclear.processing.bid_generator import generate_bids, perturb_bids, synthesize_base_supply
from flexclear.processing.formulation import FormulationError, build_lp, build_socp, build_system, polygon_edges
from flexclear.processing.market import ClearingError, MarketConsistencyError, clear, settle, verify_physics
from flexclear.processing.monte_carlo import MonteCarloAbort, convergence_trace, run_monte_carlo
from flexclear.processing.topology import TopologyError, build_radial, leaf_depths

__all__ = [
    "build_radial",
    "leaf_depths",
    "TopologyError",
    "synthesize_base_supply",
    "generate_bids",
    "perturb_bids",
    "polygon_edges",
    "build_lp",
    "build_socp",
    "build_system",
    "FormulationError",
    "clear",
    "settle",
    "verify_physics",
    "ClearingError",
    "MarketConsistencyError",
    "rmse",
    "compare_deterministic",
    "normalize_reports",
    "comparison_table",
    "ComparisonError",
    "DimensionError",
    "run_monte_carlo",
    "convergence_trace",
    "MonteCarloAbort",
]
