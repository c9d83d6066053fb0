"""A small reverse-mode engine covering the layers of the CRNN."""

from .gru import GRU, BiGRU
from .layers import Conv2D, Dense, Layer, MaxPool2D, ReLU, Sequential, TemporalMean, ToSequence
from .losses import softmax, softmax_cross_entropy
from .optim import OptimizerState, StepSchedule, sgd_nesterov_step
from .tensor import Tensor

__all__ = [
    "BiGRU", "Conv2D", "Dense", "GRU", "Layer", "MaxPool2D", "OptimizerState", "ReLU",
    "Sequential", "StepSchedule", "TemporalMean", "Tensor", "ToSequence",
    "sgd_nesterov_step", "softmax", "softmax_cross_entropy",
]
