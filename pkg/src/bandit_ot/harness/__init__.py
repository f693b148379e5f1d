"""Experiment runner, regret bounds, coverage studies and the CLI."""

from .bounds import (
    BoundReport,
    bound_for_run,
    epsilon_direct_sum,
    epsilon_sum_bound,
    finite_basis_bound,
    fixed_order_bound,
    kappa_discrete,
    noise_term,
    realized_design_bound,
    summation_lemma_bound,
    theorem_bound,
    varying_order_bound,
)
from .coverage import CoverageReport, coverage_study, wilson_interval
from .export import export, read_json, write_csv, write_json
from .runner import COLUMNS, ConfigError, ExperimentConfig, RunRecord, loglog_slope, run_experiment, run_single

__all__ = [
    "BoundReport", "COLUMNS", "ConfigError", "CoverageReport", "ExperimentConfig", "RunRecord",
    "bound_for_run", "coverage_study", "epsilon_direct_sum", "epsilon_sum_bound", "export",
    "finite_basis_bound", "fixed_order_bound", "kappa_discrete", "loglog_slope", "noise_term",
    "read_json", "realized_design_bound", "run_experiment", "run_single", "summation_lemma_bound",
    "theorem_bound", "varying_order_bound", "wilson_interval", "write_csv", "write_json",
]
