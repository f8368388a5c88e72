"""Semi-supervised federated learning with peer communities and peer anonymization."""

from ._backend import BACKEND
from .config import ExperimentConfig, bench_10c, config_from_dict, parse_config
from .errors import ConfigError, NumericError, ShapeError
from .experiment import run_experiment
from .nn import ModelParams, forward, init_params, loss_and_grads

__all__ = [
    "BACKEND",
    "ConfigError",
    "ExperimentConfig",
    "ModelParams",
    "NumericError",
    "ShapeError",
    "bench_10c",
    "config_from_dict",
    "forward",
    "init_params",
    "loss_and_grads",
    "parse_config",
    "run_experiment",
]
