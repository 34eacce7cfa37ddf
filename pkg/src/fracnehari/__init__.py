"""Nehari-manifold solver for the fractional p-Kirchhoff problem on an interval."""

from .domain import (
    DiscreteFunction,
    GridDomain,
    WeightSpec,
    build_grid,
    estimate_capital_lambda,
    estimate_sobolev_constant,
    gagliardo_seminorm_p,
    parse_weight,
    weighted_integral,
)
from .fiber import (
    Branch,
    FiberReport,
    E_lambda,
    apriori_bound_check,
    classify,
    fiber_first_derivative,
    fiber_second_derivative,
    find_fiber_roots,
    find_t_max,
    psi,
    psi_prime,
)
from .functional import (
    ProblemParams,
    Regime,
    TruncationParams,
    energy,
    energy_gradient,
    energy_truncated,
    kirchhoff_M,
    kirchhoff_M_hat,
    truncated_M,
    truncated_M_hat,
    weak_residual,
)
from .oracle import brute_force_oracle
from .solver import (
    NehariPoint,
    SolveReport,
    SolverOptions,
    minimize_branch,
    nonneg_projectize,
    project_to_nehari,
    solve,
)
from .thresholds import ThresholdTable, compute_thresholds, critical_threshold

__all__ = [
    "Branch", "DiscreteFunction", "E_lambda", "FiberReport", "GridDomain", "NehariPoint",
    "ProblemParams", "Regime", "SolveReport", "SolverOptions", "ThresholdTable",
    "TruncationParams", "WeightSpec", "apriori_bound_check", "brute_force_oracle",
    "build_grid", "classify", "compute_thresholds", "critical_threshold", "energy",
    "energy_gradient", "energy_truncated", "estimate_capital_lambda",
    "estimate_sobolev_constant", "fiber_first_derivative", "fiber_second_derivative",
    "find_fiber_roots", "find_t_max", "gagliardo_seminorm_p", "kirchhoff_M",
    "kirchhoff_M_hat", "minimize_branch", "nonneg_projectize", "parse_weight",
    "project_to_nehari", "psi", "psi_prime", "solve", "truncated_M", "truncated_M_hat",
    "weak_residual", "weighted_integral",
]
