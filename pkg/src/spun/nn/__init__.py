"""Dense-tensor autodiff, transformer layers, Adam, and checkpoint IO."""

from . import tensor
from .ckpt import load_ckpt, load_into, save_ckpt
from .layers import (
    CrossBlock,
    Dropout,
    EncoderBlock,
    FeedForward,
    LayerNorm,
    Linear,
    MultiHeadAttention,
    ParamStore,
)
from .optim import LrSchedule, OptimizerState, adam_step, lr_at
from .tensor import RunCtx, Tensor, gradcheck

__all__ = [
    "CrossBlock",
    "Dropout",
    "EncoderBlock",
    "FeedForward",
    "LayerNorm",
    "Linear",
    "LrSchedule",
    "MultiHeadAttention",
    "OptimizerState",
    "ParamStore",
    "RunCtx",
    "Tensor",
    "adam_step",
    "gradcheck",
    "load_ckpt",
    "load_into",
    "save_ckpt",
    "lr_at",
    "tensor",
]
