"""Reliability-based design when distribution parameters are estimated from data.

Precision margins (in limit or in probability) compensate for the sampling
error of the estimates and shrink as more data is collected.
"""
from .bench import (
    EnsembleReport,
    c2_coverage,
    effective_margin,
    effective_reliability,
    replicate,
)
from .exceptions import PrecisionMarginError
from .margin import (
    MarginKind,
    MarginSpec,
    MarginValue,
    cri_quantile,
    mil_margin_delta,
    mil_margin_exact_tension,
    mip_margin_delta,
    pri_index,
)
from .problems import DesignProblem, beam_problem, exp_problem, tension_problem
from .reliability import mc_limit_mean_gradient, mc_reliability, pma_quantile
from .rngstat import DistributionModel, ParamEstimate, SeededStream, fit_normal
from .solve import DesignResult, OptimizerConfig, Strategy, StrategyConfig, solve_rbdo_mc
from .tolerance import basis_value, k_factor

__version__ = "0.1.0"

__all__ = [
    "DesignProblem",
    "DesignResult",
    "DistributionModel",
    "EnsembleReport",
    "MarginKind",
    "MarginSpec",
    "MarginValue",
    "OptimizerConfig",
    "ParamEstimate",
    "PrecisionMarginError",
    "SeededStream",
    "Strategy",
    "StrategyConfig",
    "basis_value",
    "beam_problem",
    "c2_coverage",
    "cri_quantile",
    "effective_margin",
    "effective_reliability",
    "exp_problem",
    "fit_normal",
    "k_factor",
    "mc_limit_mean_gradient",
    "mc_reliability",
    "mil_margin_delta",
    "mil_margin_exact_tension",
    "mip_margin_delta",
    "pma_quantile",
    "pri_index",
    "replicate",
    "solve_rbdo_mc",
    "tension_problem",
]
