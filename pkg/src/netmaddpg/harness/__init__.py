"""Experiment orchestration and its command line."""

from .compare import Comparison, GridMismatch, compare_runs
from .config import ConfigError, ExperimentConfig, load_config, parse_config_text, save_config
from .presets import PRESETS, preset
from .run import RunRecord, evaluate_run, load_run, random_baseline, read_metrics, run_experiment, stored_baseline
