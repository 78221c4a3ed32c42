"""Minimum-width simultaneous confidence bands for simulated sample paths.

The nominal band covers a target fraction of the training paths with the
smallest summed width; the robust band additionally meets aggregate width
floors derived from a budget uncertainty set, whose size is tuned by
cross-validated bisection.
"""

from .band import BudgetParams, compute_beta, default_budget, subset_objective, t_star, worst_case_widening
from .pathset import (
    ConfidenceBand,
    PathFormatError,
    QuantileBounds,
    SamplePathSet,
    coverage_rate,
    empirical_quantiles,
    is_covered,
    load_paths,
    naive_band,
    save_paths,
)
from .simulators import (
    MCE_ERLANG_R,
    CASE_STUDY_VAR,
    ErlangRModel,
    RandomSource,
    VarModel,
    average_rate_model,
    simulate_erlang_r,
    simulate_var,
)
from .solver import SolveOptions, SolveResult, brute_force, solve_nominal, solve_robust
from .tuner import TunerConfig, TunerResult, tune_gamma

__version__ = "0.1.0"

__all__ = [
    "BudgetParams",
    "ConfidenceBand",
    "ErlangRModel",
    "MCE_ERLANG_R",
    "CASE_STUDY_VAR",
    "PathFormatError",
    "QuantileBounds",
    "RandomSource",
    "SamplePathSet",
    "SolveOptions",
    "SolveResult",
    "TunerConfig",
    "TunerResult",
    "VarModel",
    "average_rate_model",
    "brute_force",
    "compute_beta",
    "coverage_rate",
    "default_budget",
    "empirical_quantiles",
    "is_covered",
    "load_paths",
    "naive_band",
    "save_paths",
    "simulate_erlang_r",
    "simulate_var",
    "solve_nominal",
    "solve_robust",
    "subset_objective",
    "t_star",
    "tune_gamma",
    "worst_case_widening",
]
