"""Two-branch LAB-space shadow removal: model, training, and evaluation."""

__version__ = "0.1.0"

from .autodiff import Tensor, backward
from .config import RunConfig, resolve
from .errors import (ArgumentError, ConfigError, DatasetError, EvalInputError,
                     LabnetError, NumericError, ShapeError, StateError,
                     TrainingDiverged)
from .model import (ModelConfig, count_flops, count_params, forward,
                    init_params, load_checkpoint, save_checkpoint)
from .training import predict_rgb, train

__all__ = [
    "ArgumentError", "ConfigError", "DatasetError", "EvalInputError",
    "LabnetError", "ModelConfig", "NumericError", "RunConfig", "ShapeError",
    "StateError", "Tensor", "TrainingDiverged", "backward", "count_flops",
    "count_params", "forward", "init_params", "load_checkpoint",
    "predict_rgb", "resolve", "save_checkpoint", "train",
]
