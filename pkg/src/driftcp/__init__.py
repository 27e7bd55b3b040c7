"""Conformal prediction with shift-compensated thresholds on drifting streams."""

__version__ = "0.1.0"

from .config import ExperimentConfig, load_config
from .core import conformal_quantile, prediction_set, softmax, weighted_quantile
from .harness import replay_run, run_calibrate, run_replay, run_simulate, simulate_run
from .shift import joint_representation, js_divergence, shift_estimate

__all__ = [
    "ExperimentConfig",
    "load_config",
    "conformal_quantile",
    "weighted_quantile",
    "prediction_set",
    "softmax",
    "simulate_run",
    "replay_run",
    "run_simulate",
    "run_replay",
    "run_calibrate",
    "joint_representation",
    "js_divergence",
    "shift_estimate",
]
