"""Forward/backward pairs for the fixed layer set.

Every forward returns (output, cache); the matching backward consumes the
cache and the upstream gradient and returns exact float64 gradients. All
backwards are verified against central differences by the gradcheck module.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from ..errors import DimensionError, ValidationError

# --- dense primitives -----------------------------------------------------


def linear_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray | None = None):
    if x.shape[1] != w.shape[0]:
        raise DimensionError(f"linear: x is {x.shape}, w is {w.shape}")
    y = x @ w
    if b is not None:
        if b.shape[-1] != w.shape[1]:
            raise DimensionError(f"linear: bias {b.shape} vs w {w.shape}")
        y = y + b
    return y, (x, w, b is not None)


def linear_backward(dy: np.ndarray, cache):
    x, w, has_bias = cache
    dx = dy @ w.T
    dw = x.T @ dy
    db = dy.sum(axis=0) if has_bias else None
    return dx, dw, db


def relu_forward(x: np.ndarray):
    return np.maximum(x, 0.0), x > 0


def relu_backward(dy: np.ndarray, mask: np.ndarray) -> np.ndarray:
    return dy * mask


def dropout_forward(
    x: np.ndarray, rate: float, rng: np.random.Generator | None, train: bool
):
    """Inverted dropout: kept units are scaled by 1/(1-rate)."""
    if not 0.0 <= rate < 1.0:
        raise ValidationError(f"dropout rate must lie in [0, 1), got {rate}")
    if not train or rate == 0.0:
        return x, None
    if rng is None:
        raise ValidationError("training-mode dropout needs an RNG")
    mask = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return x * mask, mask


def dropout_backward(dy: np.ndarray, mask: np.ndarray | None) -> np.ndarray:
    return dy if mask is None else dy * mask


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    shifted = x - x.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


# --- graph convolution ----------------------------------------------------


def normalize_adjacency(n: int, edges: list[tuple[int, int]]) -> sp.csr_array:
    """Symmetric normalization with self loops: D^{-1/2} (A + I) D^{-1/2}."""
    rows = [i for i, _ in edges] + [j for _, j in edges] + list(range(n))
    cols = [j for _, j in edges] + [i for i, _ in edges] + list(range(n))
    vals = np.ones(len(rows))
    a = sp.coo_array((vals, (rows, cols)), shape=(n, n)).tocsr()
    deg = np.asarray(a.sum(axis=1)).ravel()
    d_inv_sqrt = 1.0 / np.sqrt(deg)
    scale = sp.diags_array(d_inv_sqrt)
    return (scale @ a @ scale).tocsr()


def gcn_forward(adj_norm, x: np.ndarray, w: np.ndarray):
    """One graph convolution: ReLU(adj_norm @ x @ w)."""
    if adj_norm.shape != (x.shape[0], x.shape[0]):
        raise DimensionError(f"gcn: adjacency {adj_norm.shape} vs x {x.shape}")
    if x.shape[1] != w.shape[0]:
        raise DimensionError(f"gcn: x is {x.shape}, w is {w.shape}")
    u = adj_norm @ x
    m = u @ w
    h = np.maximum(m, 0.0)
    return h, (adj_norm, u, m > 0, w)


def gcn_backward(dh: np.ndarray, cache):
    adj_norm, u, mask, w = cache
    dm = dh * mask
    dw = u.T @ dm
    du = dm @ w.T
    dx = adj_norm.T @ du
    return dx, dw


# --- multi-layer perceptron -------------------------------------------------


def mlp_forward(
    x: np.ndarray,
    weights: list[tuple[np.ndarray, np.ndarray]],
    dropout_rate: float = 0.0,
    train: bool = False,
    rng: np.random.Generator | None = None,
):
    """Affine->ReLU(->dropout) stack; the final layer stays affine."""
    if not weights:
        raise ValidationError("mlp needs at least one layer")
    caches = []
    h = x
    last = len(weights) - 1
    for idx, (w, b) in enumerate(weights):
        h, lin_cache = linear_forward(h, w, b)
        if idx < last:
            h, relu_mask = relu_forward(h)
            h, drop_mask = dropout_forward(h, dropout_rate, rng, train)
        else:
            relu_mask = drop_mask = None
        caches.append((lin_cache, relu_mask, drop_mask))
    return h, caches


def mlp_backward(dy: np.ndarray, caches):
    grads: list[tuple[np.ndarray, np.ndarray]] = []
    dh = dy
    for lin_cache, relu_mask, drop_mask in reversed(caches):
        if drop_mask is not None or relu_mask is not None:
            dh = dropout_backward(dh, drop_mask)
            dh = relu_backward(dh, relu_mask)
        dh, dw, db = linear_backward(dh, lin_cache)
        grads.append((dw, db))
    grads.reverse()
    return dh, grads


# --- sort pooling -----------------------------------------------------------


def sort_pool_forward(h: np.ndarray, k: int):
    """Keep the top-k rows by last feature channel, zero-padded to k rows.

    Descending stable sort: equal keys preserve the original node order.
    """
    if k < 1:
        raise ValidationError(f"sort_pool needs k >= 1, got {k}")
    n, d = h.shape
    order = np.argsort(-h[:, -1], kind="stable")
    top = order[: min(k, n)]
    pooled = np.zeros((k, d))
    pooled[: len(top)] = h[top]
    return pooled.reshape(1, k * d), (top, n, d, k)


def sort_pool_backward(dy: np.ndarray, cache) -> np.ndarray:
    top, n, d, k = cache
    dh = np.zeros((n, d))
    dh[top] = dy.reshape(k, d)[: len(top)]
    return dh


# --- scaled dot-product self-attention --------------------------------------


def sinusoidal_encoding(length: int, dim: int) -> np.ndarray:
    """Fixed sin/cos position table, sin on even channels, cos on odd."""
    pos = np.arange(length, dtype=np.float64)[:, None]
    half = (dim + 1) // 2
    freq = 1.0 / (10000.0 ** (2.0 * np.arange(half) / dim))
    enc = np.zeros((length, dim))
    enc[:, 0::2] = np.sin(pos * freq)
    enc[:, 1::2] = np.cos(pos * freq[: dim // 2])
    return enc


def attention_forward(
    s: np.ndarray,
    wq: np.ndarray,
    wk: np.ndarray,
    wv: np.ndarray,
    positional: bool = True,
):
    """Single-head self-attention softmax(QK^T/sqrt(d)) V over frame rows."""
    t, d = s.shape
    for name, w in (("wq", wq), ("wk", wk), ("wv", wv)):
        if w.shape != (d, d):
            raise DimensionError(f"attention: {name} is {w.shape}, expected ({d}, {d})")
    sp_in = s + sinusoidal_encoding(t, d) if positional else s
    q = sp_in @ wq
    k = sp_in @ wk
    v = sp_in @ wv
    scale = 1.0 / np.sqrt(d)
    att = softmax(q @ k.T * scale, axis=-1)
    out = att @ v
    return out, (sp_in, q, k, v, att, scale, (wq, wk, wv))


def attention_backward(dout: np.ndarray, cache):
    sp_in, q, k, v, att, scale, (wq, wk, wv) = cache
    dv = att.T @ dout
    datt = dout @ v.T
    dscores = att * (datt - (datt * att).sum(axis=-1, keepdims=True))
    dq = dscores @ k * scale
    dk = dscores.T @ q * scale
    ds = dq @ wq.T + dk @ wk.T + dv @ wv.T
    dwq = sp_in.T @ dq
    dwk = sp_in.T @ dk
    dwv = sp_in.T @ dv
    return ds, dwq, dwk, dwv
