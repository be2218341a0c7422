"""Experiment harness: configuration, batch runner, reports and the CLI."""
from .config import ConfigError, ExperimentConfig, build_objective, load_config, parse_config
from .oracle import OracleResult, oracle
from .report import build_report
from .runner import run_experiment

__all__ = [
    "ConfigError", "ExperimentConfig", "OracleResult", "build_objective", "build_report",
    "load_config", "oracle", "parse_config", "run_experiment",
]
