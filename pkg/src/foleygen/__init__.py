"""Category-conditioned Foley sound synthesis and evaluation."""

__version__ = "0.1.0"

from .config import GlobalConfig, config_hash
from .errors import (
    CheckpointError,
    ConfigError,
    DatasetError,
    EvaluationError,
    FoleygenError,
    GridSearchError,
    ModelError,
    SpectralError,
    TrainingError,
)

__all__ = [
    "GlobalConfig",
    "config_hash",
    "FoleygenError",
    "ConfigError",
    "DatasetError",
    "SpectralError",
    "ModelError",
    "TrainingError",
    "CheckpointError",
    "EvaluationError",
    "GridSearchError",
]
