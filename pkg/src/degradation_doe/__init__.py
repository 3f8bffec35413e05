"""Optimal experimental designs for accelerated degradation tests under linear mixed-effects models."""

__version__ = "0.1.0"

from .designs import ApproximateDesign, c_criterion, efficiency, product_design, uniform_grid_design
from .destructive import destructive_optimal_design
from .errors import (
    AmbiguousQuantileError,
    DegenerateQuantileError,
    DegenerateVarianceError,
    DesignError,
    DomainError,
    InfeasibleError,
    SingularInformationError,
)
from .estimation import SimulationSpec, fit_ml, simulate_paths, validate_avar
from .failure_time import avar_quantile, quantile, use_profile
from .model import ProductModel, Scenario, VarianceComponents, additive_basis, linear_basis, quadratic_basis
from .scenario_io import load_scenario
from .stress_design import elfving_solve, optimal_stress_for_quantile, verify_c_optimality
from .time_design import TimeGrid, optimal_time_plan

__all__ = [
    "ApproximateDesign", "c_criterion", "efficiency", "product_design", "uniform_grid_design",
    "destructive_optimal_design",
    "AmbiguousQuantileError", "DegenerateQuantileError", "DegenerateVarianceError", "DesignError", "DomainError",
    "InfeasibleError", "SingularInformationError",
    "SimulationSpec", "fit_ml", "simulate_paths", "validate_avar",
    "avar_quantile", "quantile", "use_profile",
    "ProductModel", "Scenario", "VarianceComponents", "additive_basis", "linear_basis", "quadratic_basis",
    "load_scenario",
    "elfving_solve", "optimal_stress_for_quantile", "verify_c_optimality",
    "TimeGrid", "optimal_time_plan",
]
