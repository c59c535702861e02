"""Modality-arbitrary camera/LiDAR fusion in bird's-eye view, at desk scale."""
from .config import TrainConfig, load_config, preset
from .corruptions import CorruptionSpec, apply_corruption
from .evaluation import SuiteEntry, evaluate
from .model import FusionModel, ModelConfig
from .training import train

__version__ = "0.1.0"

__all__ = [
    "CorruptionSpec",
    "FusionModel",
    "ModelConfig",
    "SuiteEntry",
    "TrainConfig",
    "apply_corruption",
    "evaluate",
    "load_config",
    "preset",
    "train",
]
