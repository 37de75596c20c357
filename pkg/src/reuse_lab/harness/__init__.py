"""Experiment harness: JSON-configured sweeps, CSV/plot-data output, CLI."""

from .config import ExperimentConfig, ResultRow, load_config
from .runner import emit_csv, emit_plotdata, parse_csv, run_experiment

__all__ = [
    "ExperimentConfig",
    "ResultRow",
    "load_config",
    "run_experiment",
    "emit_csv",
    "parse_csv",
    "emit_plotdata",
]
