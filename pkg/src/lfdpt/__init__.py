"""Light-field super-resolution with a detail-preserving dual-branch transformer.

Everything runs on a small float64 reverse-mode autodiff engine
(``lfdpt.tensor``) built on numpy.
"""

from .checkpoint import load_checkpoint, save_checkpoint
from .errors import (ConfigurationError, DimensionError, DptError, FormatError, NumericError,
                     UsageError)
from .metrics import MetricReport, evaluate, evaluate_many, psnr, ssim
from .model import ABLATIONS, DptConfig, DptModel, count_params, estimate_flops
from .salsa import SalsaConfig, SalsaLayer
from .tensor import Tensor, no_grad
from .train import TrainConfig, lr_at, train

__version__ = "0.1.0"

__all__ = [
    "ABLATIONS", "ConfigurationError", "DimensionError", "DptConfig", "DptError", "DptModel",
    "FormatError", "MetricReport", "NumericError", "SalsaConfig", "SalsaLayer", "Tensor",
    "TrainConfig", "UsageError", "count_params", "estimate_flops", "evaluate", "evaluate_many",
    "load_checkpoint", "lr_at", "no_grad", "psnr", "save_checkpoint", "ssim", "train",
]
