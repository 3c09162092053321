"""Confusion-matrix metrics turned into differentiable losses through a
sigmoid amplifier, with small numpy networks to train on them."""

from .approx import DEFAULT_L, approximate, approximate_derivative, valid_L_range
from .confusion import hard_confusion, metric_score, soft_confusion
from .data import Dataset, load_csv, synth_imbalanced
from .losses import LossSpec, loss_from_name, loss_grad_yh, loss_value
from .network import NetworkConfig, TrainConfig, backward, forward, init, predict, train

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_L",
    "Dataset",
    "LossSpec",
    "NetworkConfig",
    "TrainConfig",
    "approximate",
    "approximate_derivative",
    "backward",
    "forward",
    "hard_confusion",
    "init",
    "load_csv",
    "loss_from_name",
    "loss_grad_yh",
    "loss_value",
    "metric_score",
    "predict",
    "soft_confusion",
    "synth_imbalanced",
    "train",
    "valid_L_range",
]
