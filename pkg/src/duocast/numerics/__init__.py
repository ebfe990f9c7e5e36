"""Minimal dense-tensor compute with reverse-mode differentiation."""

from .tensor import (
    NonFiniteError,
    NumericsError,
    ShapeError,
    Tape,
    TapeError,
    Tensor,
    as_tensor,
    backward,
    get_precision,
    no_grad,
    precision,
    set_precision,
)
from . import ops
from .layers import (
    EncoderBlock,
    FeedForward,
    LayerNorm,
    Linear,
    Module,
    MultiHeadAttention,
    Parameter,
    causal_mask,
    fan_in_uniform,
    scaled_dot_attention,
)
from .optim import Adam, OptimError, cosine_lr
from .gradcheck import GradcheckReport, gradcheck

__all__ = [
    "Adam",
    "EncoderBlock",
    "FeedForward",
    "GradcheckReport",
    "LayerNorm",
    "Linear",
    "Module",
    "MultiHeadAttention",
    "NonFiniteError",
    "NumericsError",
    "OptimError",
    "Parameter",
    "ShapeError",
    "Tape",
    "TapeError",
    "Tensor",
    "as_tensor",
    "backward",
    "causal_mask",
    "cosine_lr",
    "fan_in_uniform",
    "get_precision",
    "gradcheck",
    "no_grad",
    "ops",
    "precision",
    "scaled_dot_attention",
    "set_precision",
]
