from .layers import (BatchNorm1d, Conv1d, GlobalAvgPool, LayerSpec, Linear, MaxPool1d, Module,
                     ReLU, ResidualAdd, build_layer, forward)
from .optim import Adam, AdamState, adam_step, kaiming_init, lr_schedule
from .tensor import Tensor, concat, mse_loss

__all__ = [
    "Adam", "AdamState", "BatchNorm1d", "Conv1d", "GlobalAvgPool", "LayerSpec", "Linear",
    "MaxPool1d", "Module", "ReLU", "ResidualAdd", "Tensor", "adam_step", "build_layer",
    "concat", "forward", "kaiming_init", "lr_schedule", "mse_loss",
]
