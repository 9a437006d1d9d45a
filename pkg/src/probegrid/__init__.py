"""probegrid: image codec built on a probed multiresolution hash grid."""

__version__ = "0.1.0"

from . import backends
from .metrics import pareto_front, psnr
from .model import HyperParams, Model, init_model
from .model_io import (
    decode_at,
    decode_image,
    decode_rect,
    deserialize,
    serialize,
    size_report,
    to_inference,
)
from .pngio import load_image, save_image
from .trainer import TrainConfig, fit, select_hyperparams

__all__ = [
    "HyperParams", "Model", "TrainConfig", "backends", "decode_at",
    "decode_image", "decode_rect", "deserialize", "fit", "init_model",
    "load_image", "pareto_front", "psnr", "save_image", "select_hyperparams",
    "serialize", "size_report", "to_inference",
]
