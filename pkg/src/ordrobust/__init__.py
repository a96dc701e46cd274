"""Robustness of regressions on ordered response scales to monotone relabeling."""

from .cost import CostValue, GapVector, alpha_for, cost, max_var
from .dataset import DataError, Dataset, load_dataset, load_elicitation, make_dataset
from .inference import SignificanceReport, min_cost_significance_reversal, p_bounds, p_value
from .regression import CoefficientKernel, DichotomizedBattery, build_kernel, fit_battery
from .reversal import (
    ReversalReport,
    beta_range_at_budget,
    check_reversibility,
    min_cost_sign_reversal,
    min_cost_target_ratio,
    ratio_bounds,
)
from .scaleuse import (
    GammaReport,
    ScaleUseEstimate,
    gamma_analysis,
    objective_subjective,
    quantile_match,
    slider_cost,
)

__version__ = "0.1.0"

__all__ = [
    "CoefficientKernel", "CostValue", "DataError", "Dataset", "DichotomizedBattery",
    "GammaReport", "GapVector", "ReversalReport", "ScaleUseEstimate", "SignificanceReport",
    "alpha_for", "beta_range_at_budget", "build_kernel", "check_reversibility", "cost",
    "fit_battery", "gamma_analysis", "load_dataset", "load_elicitation", "make_dataset",
    "max_var", "min_cost_sign_reversal", "min_cost_significance_reversal",
    "min_cost_target_ratio", "objective_subjective", "p_bounds", "p_value", "quantile_match",
    "ratio_bounds", "slider_cost",
]
