"""Outlier detection for partial multi-view data with regularized contrastive autoencoders."""

from .config import TrainConfig, build_config
from .training import RunResult, Trainer, run_experiment, sweep

__all__ = ["TrainConfig", "build_config", "RunResult", "Trainer", "run_experiment", "sweep"]
__version__ = "0.1.0"
