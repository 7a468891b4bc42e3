"""Benchmark harness: config, experiment runner, metrics, reports, replay and CLI."""
from .config import ConfigError, ExperimentConfig, config_from_dict, load_config
from .experiment import archive_hash, build_context, run_experiment, theorem2_check
from .metrics import MetricsRow, compute_metrics
from .replay import ReplaySchemaError, read_replay_csv, replay_offline, write_replay_csv
from .report import TABLE_COLUMNS, emit_report, read_table_json

__all__ = [
    "ConfigError", "ExperimentConfig", "config_from_dict", "load_config",
    "archive_hash", "build_context", "run_experiment", "theorem2_check",
    "MetricsRow", "compute_metrics",
    "ReplaySchemaError", "read_replay_csv", "replay_offline", "write_replay_csv",
    "TABLE_COLUMNS", "emit_report", "read_table_json",
]
