"""Manual-gradient neural core: dense layers, losses, Adam, gradient checks."""

from .gradcheck import GradCheckReport, grad_check
from .layers import (
    attention_backward,
    attention_forward,
    dropout_backward,
    dropout_forward,
    gcn_backward,
    gcn_forward,
    linear_backward,
    linear_forward,
    mlp_backward,
    mlp_forward,
    normalize_adjacency,
    relu_backward,
    relu_forward,
    sinusoidal_encoding,
    softmax,
    sort_pool_backward,
    sort_pool_forward,
)
from .losses import cross_entropy, mae
from .optim import AdamState, adam_step
from .params import Params, glorot_uniform, load_checkpoint, save_checkpoint

__all__ = [
    "AdamState",
    "GradCheckReport",
    "Params",
    "adam_step",
    "attention_backward",
    "attention_forward",
    "cross_entropy",
    "dropout_backward",
    "dropout_forward",
    "gcn_backward",
    "gcn_forward",
    "glorot_uniform",
    "grad_check",
    "linear_backward",
    "linear_forward",
    "load_checkpoint",
    "mae",
    "mlp_backward",
    "mlp_forward",
    "normalize_adjacency",
    "relu_backward",
    "relu_forward",
    "save_checkpoint",
    "sinusoidal_encoding",
    "softmax",
    "sort_pool_backward",
    "sort_pool_forward",
]
