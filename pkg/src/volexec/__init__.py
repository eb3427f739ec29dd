"""Volume-weighted execution scheduling under linear market impact.

Computes, optimizes, and validates liquidation schedules when trading costs
scale with the instantaneous rate relative to market turnover: schedule
constructors (time-proportional, volume-proportional and its tilted variants),
exact realized-cost accounting, mean-variance objectives under deterministic
and lognormal turnover, boundary-value and direct-optimization solvers, a
small-risk expansion, and seeded Monte Carlo validation.
"""

from .bvp import LinearBvpSpec, optimal_inventory_ode, solve_linear_bvp
from .cost import (
    CostBreakdown,
    MarketParams,
    MvValue,
    expected_cost,
    market_vwap,
    mv_deterministic,
    mv_gbm,
    mv_gbm_quadrature_check,
    realized_is_cost,
    realized_is_cost_paths,
    trader_vwap,
    vwap_slippage,
)
from .errors import (
    ConsistencyError,
    InconsistentStrategyError,
    NegativeRateError,
    SolverFailureError,
)
from .grids import TimeGrid, build_grid
from .montecarlo import (
    MomentEstimate,
    SimulationConfig,
    estimate_cost_moments,
    simulate_joint_paths,
    validate_theorem_orderings,
)
from .optimizer import (
    DiscretizedProblem,
    SolveReport,
    solve_qp_deterministic,
    solve_sqp_gbm,
)
from .strategies import (
    InventoryCurve,
    Strategy,
    ac_closed_form,
    asymptotic_expansion,
    expected_vwap_strategy,
    inventory_from_rate,
    rate_from_inventory,
    strategy_from_csv,
    strategy_to_csv,
    twisted_vwap,
    vwap_strategy,
)
from .validation import run_validation
from .volume import (
    GbmVolumeModel,
    VolumePathSet,
    VolumeProfile,
    arcsine_profile,
    constant_profile,
    gbm_harmonic_mean,
    profile_from_csv,
    profile_from_samples,
    profile_to_csv,
    simulate_gbm_paths,
)

__version__ = "0.1.0"

__all__ = [
    "TimeGrid",
    "build_grid",
    "VolumeProfile",
    "GbmVolumeModel",
    "VolumePathSet",
    "arcsine_profile",
    "constant_profile",
    "profile_from_samples",
    "profile_to_csv",
    "profile_from_csv",
    "gbm_harmonic_mean",
    "simulate_gbm_paths",
    "Strategy",
    "InventoryCurve",
    "inventory_from_rate",
    "rate_from_inventory",
    "vwap_strategy",
    "expected_vwap_strategy",
    "twisted_vwap",
    "ac_closed_form",
    "asymptotic_expansion",
    "strategy_to_csv",
    "strategy_from_csv",
    "MarketParams",
    "CostBreakdown",
    "MvValue",
    "realized_is_cost",
    "realized_is_cost_paths",
    "market_vwap",
    "trader_vwap",
    "vwap_slippage",
    "expected_cost",
    "mv_deterministic",
    "mv_gbm",
    "mv_gbm_quadrature_check",
    "LinearBvpSpec",
    "solve_linear_bvp",
    "optimal_inventory_ode",
    "DiscretizedProblem",
    "SolveReport",
    "solve_qp_deterministic",
    "solve_sqp_gbm",
    "SimulationConfig",
    "MomentEstimate",
    "simulate_joint_paths",
    "estimate_cost_moments",
    "validate_theorem_orderings",
    "run_validation",
    "InconsistentStrategyError",
    "NegativeRateError",
    "SolverFailureError",
    "ConsistencyError",
]
