"""Marked temporal point processes with conditionally dependent time and mark."""

from .events import Dataset, EventSequence, load_dataset, save_dataset
from .model import ModelConfig, TPPModel
from .training import TrainConfig, train

__all__ = [
    "Dataset",
    "EventSequence",
    "ModelConfig",
    "TPPModel",
    "TrainConfig",
    "load_dataset",
    "save_dataset",
    "train",
]
__version__ = "0.1.0"
