"""Source-splitting DOA networks, their losses, training and inference."""

from doalab.neural.checkpoint import load_checkpoint, save_checkpoint
from doalab.neural.inference import DoaEstimator, circular_median, decode
from doalab.neural.models import ModelConfig, build_model
from doalab.neural.trainer import Trainer

__all__ = [
    "DoaEstimator",
    "ModelConfig",
    "Trainer",
    "build_model",
    "circular_median",
    "decode",
    "load_checkpoint",
    "save_checkpoint",
]
