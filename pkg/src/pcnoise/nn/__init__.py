from .layers import (
    BatchNorm,
    Conv2d,
    GlobalMaxPool,
    Linear,
    MaxPool2d,
    Param,
    ReLU,
    global_max_pool,
    glorot_uniform,
    relu,
)
from .loss import softmax_cross_entropy
from .optim import OptimizerConfig, SgdMomentum, sgd_step
from .gradcheck import check_model, grad_check
from .checkpoint import CorruptCheckpointError, load_checkpoint, save_checkpoint

__all__ = [
    "BatchNorm", "Conv2d", "GlobalMaxPool", "Linear", "MaxPool2d", "Param", "ReLU",
    "global_max_pool", "glorot_uniform", "relu", "softmax_cross_entropy",
    "OptimizerConfig", "SgdMomentum", "sgd_step", "check_model", "grad_check",
    "CorruptCheckpointError", "load_checkpoint", "save_checkpoint",
]
