"""Experiment orchestration: configs, seed fan-out, reports, CLI."""

from .config import (
    ALGORITHMS,
    METHODS,
    ExperimentConfig,
    apply_override,
    describe_config,
    list_presets,
    load_config,
    load_preset_dict,
)
from .report import (
    ExperimentReport,
    aggregate_records,
    emit_outputs,
    load_report,
    read_summary_csv,
    save_report,
    strip_volatile,
)
from .run import evaluate_robustness, run_experiment, run_seed
from .walltime import compare_bc_iteration, measure_walltime, time_callable

__all__ = [
    "ALGORITHMS",
    "METHODS",
    "ExperimentConfig",
    "ExperimentReport",
    "aggregate_records",
    "apply_override",
    "compare_bc_iteration",
    "describe_config",
    "emit_outputs",
    "evaluate_robustness",
    "list_presets",
    "load_config",
    "load_preset_dict",
    "load_report",
    "measure_walltime",
    "read_summary_csv",
    "run_experiment",
    "run_seed",
    "save_report",
    "strip_volatile",
    "time_callable",
]
