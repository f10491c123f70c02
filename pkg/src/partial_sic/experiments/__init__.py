"""Configuration, Monte Carlo sweeps and result files."""

from .config import ExperimentConfig, UserConfig, apply_preset, load_config, parse_config
from .results import (COLUMNS, csv_body, emit_results, format_results, parse_results,
                      read_results, required_snr)
from .runner import (MetricsRecord, accumulate_metrics, aggregate, calibrate_ebar,
                     run_experiment)

__all__ = [
    "COLUMNS", "csv_body", "format_results", "ExperimentConfig", "UserConfig", "MetricsRecord", "accumulate_metrics", "aggregate",
    "apply_preset", "calibrate_ebar", "emit_results", "load_config", "parse_config",
    "parse_results", "read_results", "required_snr", "run_experiment",
]
