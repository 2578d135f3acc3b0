"""Experiment orchestration: configs, metrics, the grid runner, the CLI."""

from .config import ExperimentConfig, load_experiment, parse_config_text, serialize_config
from .metrics import MetricsRow, append_rows, read_metrics, run_id_for, summarize
from .runner import export_plot_data, run_experiment, train_cell

__all__ = [
    "ExperimentConfig",
    "MetricsRow",
    "append_rows",
    "export_plot_data",
    "load_experiment",
    "parse_config_text",
    "read_metrics",
    "run_experiment",
    "run_id_for",
    "serialize_config",
    "summarize",
    "train_cell",
]
