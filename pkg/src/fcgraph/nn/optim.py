"""Adam with decoupled weight decay."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DimensionError, ValidationError
from .params import Params


@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0

    @staticmethod
    def for_params(params: Params) -> "AdamState":
        return AdamState(
            m={k: np.zeros_like(p) for k, p in params.tensors.items()},
            v={k: np.zeros_like(p) for k, p in params.tensors.items()},
        )


def adam_step(
    params: Params,
    grads: dict[str, np.ndarray],
    state: AdamState,
    lr: float,
    weight_decay: float = 0.0,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """One in-place update. Decay is decoupled: p <- p*(1 - lr*wd) first,
    then the bias-corrected moment update using the raw gradient."""
    missing = set(params.names()) - set(grads)
    if missing:
        raise ValidationError(f"missing gradients for: {sorted(missing)}")
    state.t += 1
    bc1 = 1.0 - beta1**state.t
    bc2 = 1.0 - beta2**state.t
    for name in params.names():
        g = grads[name]
        p = params[name]
        if g.shape != p.shape:
            raise DimensionError(f"{name}: grad {g.shape} vs param {p.shape}")
        if weight_decay:
            p *= 1.0 - lr * weight_decay
        m = state.m[name]
        v = state.v[name]
        m += (1.0 - beta1) * (g - m)
        v += (1.0 - beta2) * (g * g - v)
        p -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
