"""Config-driven experiment runner for the stationary field diagnostics."""

from .config import ExperimentConfig, load_config, parse_text
from .presets import PRESETS, list_presets
from .runner import RunResult, Runner, run_config

__all__ = ["ExperimentConfig", "load_config", "parse_text", "PRESETS", "list_presets",
           "RunResult", "Runner", "run_config"]
