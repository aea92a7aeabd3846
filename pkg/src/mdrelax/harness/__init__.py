"""Experiment drivers and the command-line interface."""
from .analysis import drift_sign, fit_order, gamma_slope, growth_slope
from .experiments import (
    ExperimentConfig,
    run,
    run_convergence,
    run_entropy,
    run_error_growth,
    run_stability_angles,
)

__all__ = [
    "ExperimentConfig",
    "drift_sign",
    "fit_order",
    "gamma_slope",
    "growth_slope",
    "run",
    "run_convergence",
    "run_entropy",
    "run_error_growth",
    "run_stability_angles",
]
