from .layers import (
    BatchNorm,
    Conv3d,
    Dense,
    Dropout,
    Flatten,
    MaxPool3d,
    Param,
    ReLU,
    softmax,
    softmax_cross_entropy,
)
from .gradcheck import GradCheckReport, grad_check_layer, grad_check_loss

__all__ = [
    "Param",
    "Conv3d",
    "MaxPool3d",
    "BatchNorm",
    "ReLU",
    "Dropout",
    "Dense",
    "Flatten",
    "softmax",
    "softmax_cross_entropy",
    "GradCheckReport",
    "grad_check_layer",
    "grad_check_loss",
]
