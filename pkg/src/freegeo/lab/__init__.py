"""Experiment harness: run configurations, reports, batch experiments, CLI."""

from .config import RunConfig, ConfigError  # noqa: F401
from .report import Metric, Report  # noqa: F401
from .experiments import (  # noqa: F401
    run_counterexample,
    run_experiment,
    run_geodesic,
    run_moment_fixed_point,
    run_qf_convergence,
    run_talagrand,
)
