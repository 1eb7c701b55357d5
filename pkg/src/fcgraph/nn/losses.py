"""Losses with exact gradients: cross-entropy on logits and mean absolute error."""

from __future__ import annotations

import numpy as np

from ..errors import DimensionError, ValidationError
from .layers import softmax


def cross_entropy(logits: np.ndarray, targets: np.ndarray):
    """Mean CE over rows via stable log-sum-exp; gradient is softmax - onehot."""
    logits = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    targets = np.atleast_1d(np.asarray(targets))
    if not np.issubdtype(targets.dtype, np.integer):
        raise ValidationError("cross_entropy targets must be integer class indices")
    b, c = logits.shape
    if targets.shape != (b,):
        raise DimensionError(f"targets {targets.shape} vs logits {logits.shape}")
    if targets.min(initial=0) < 0 or targets.max(initial=0) >= c:
        raise ValidationError(f"class index outside [0, {c})")
    shifted = logits - logits.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1))
    loss = float((lse - shifted[np.arange(b), targets]).mean())
    grad = softmax(logits, axis=1)
    grad[np.arange(b), targets] -= 1.0
    return loss, grad / b


def mae(pred: np.ndarray, targets: np.ndarray):
    """Mean absolute error; subgradient sign(pred - target) / count."""
    pred = np.asarray(pred, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64).reshape(pred.shape)
    diff = pred - targets
    loss = float(np.abs(diff).mean())
    grad = np.sign(diff) / diff.size
    return loss, grad
