"""Experiment orchestration: configuration, trial runners and the CLI."""

from noisyls.harness.config import build, build_process, config_hash, load, normalize
from noisyls.harness.experiments import run_experiment, run_simulation, run_sweep

__all__ = [
    "build", "build_process", "config_hash", "load", "normalize",
    "run_experiment", "run_simulation", "run_sweep",
]
