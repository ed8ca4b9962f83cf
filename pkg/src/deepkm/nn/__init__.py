"""Minimal CNN engine: forward, backward, momentum SGD."""

from deepkm.nn.network import (
    Architecture,
    Gradients,
    LayerSpec,
    ModelParams,
    backward,
    build_architecture,
    forward,
    init_params,
    lenet5,
    toy_convnet,
)
from deepkm.nn.trainer import EpochRecord, RegularizerHook, TrainResult, evaluate, sgd_step, train

__all__ = [
    "Architecture",
    "EpochRecord",
    "Gradients",
    "LayerSpec",
    "ModelParams",
    "RegularizerHook",
    "TrainResult",
    "backward",
    "build_architecture",
    "evaluate",
    "forward",
    "init_params",
    "lenet5",
    "sgd_step",
    "toy_convnet",
    "train",
]
