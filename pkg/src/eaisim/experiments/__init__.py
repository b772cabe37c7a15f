"""Scenario library, sweep drivers and regression checks."""

from .drivers import (
    Peak, find_peaks, line_scan, localization, mode_form, mode_resonances, response_eigenvalues, spectrum_sweep,
    visibility_scan, zero_crossings,
)
from .regression import CheckResult, RegressionReport, run_regression
from .scenario import Expectation, ProbePath, Scenario, list_scenarios, load_scenario, parse_scenario

__all__ = [
    "Peak", "find_peaks", "line_scan", "localization", "mode_form", "mode_resonances", "response_eigenvalues",
    "spectrum_sweep", "visibility_scan", "zero_crossings", "CheckResult", "RegressionReport",
    "run_regression", "Expectation", "ProbePath", "Scenario", "list_scenarios", "load_scenario",
    "parse_scenario",
]
