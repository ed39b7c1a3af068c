"""Experiment registry, reference values and report emission."""

from .experiments import (
    EXPERIMENTS,
    Design,
    ExperimentConfig,
    ExperimentError,
    clear_calibration_cache,
    default_config,
    list_experiments,
    resolve,
    run_experiment,
)
from .report import Cell, PaperValue, ReportTable, emit, load_paper_values, load_report, paper_tables

__all__ = [
    "EXPERIMENTS", "Design", "ExperimentConfig", "ExperimentError", "clear_calibration_cache",
    "default_config", "list_experiments", "resolve", "run_experiment",
    "Cell", "PaperValue", "ReportTable", "emit", "load_paper_values", "load_report", "paper_tables",
]
