"""Reference architectures with manual gradients.

Four models share the neural core:

* ``gcn``     — stacked graph convolutions, sort pooling, MLP head
* ``gnnstar`` — graph convolutions with residual connections whose per-layer
                outputs are concatenated before readout
* ``mlp``     — plain MLP on flattened upper-triangle correlations
* ``dyn``     — a shared graph trunk embeds every frame of a dynamic
                sequence, self-attention mixes the frame embeddings, and the
                temporal mean feeds the head

Each model provides init/forward/backward functions; backwards return a
gradient for every parameter so a single optimizer step covers the model.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import DimensionError, ValidationError
from .graph_build import DynamicGraphSequence, StaticGraph
from .nn import (
    attention_backward,
    attention_forward,
    gcn_backward,
    gcn_forward,
    glorot_uniform,
    mlp_backward,
    mlp_forward,
    normalize_adjacency,
    sort_pool_backward,
    sort_pool_forward,
)
from .nn.params import Params

DEFAULT_SORT_K_CAP = 64


# --- configs ----------------------------------------------------------------


@dataclass(frozen=True)
class GnnStarConfig:
    num_layers: int = 3
    hidden_dim: int = 64
    readout: str = "sort_pool"  # or "mean"
    sort_k: int | None = None  # None -> min(n_nodes, 64)
    mlp_dims: tuple[int, ...] = (64,)
    dropout: float = 0.5
    residual: bool = True

    def __post_init__(self):
        if self.num_layers < 1 or self.hidden_dim < 1:
            raise ValidationError("num_layers and hidden_dim must be >= 1")
        if self.readout not in ("sort_pool", "mean"):
            raise ValidationError(f"unknown readout {self.readout!r}")


@dataclass(frozen=True)
class GcnBaselineConfig:
    num_layers: int = 3
    hidden_dim: int = 64
    sort_k: int | None = None
    mlp_dims: tuple[int, ...] = (64,)
    dropout: float = 0.5


@dataclass(frozen=True)
class MlpBaselineConfig:
    hidden_dims: tuple[int, ...] = (512, 256, 128)
    dropout: float = 0.5


@dataclass(frozen=True)
class DynConfig:
    trunk: GnnStarConfig = field(
        default_factory=lambda: GnnStarConfig(readout="mean", dropout=0.0)
    )
    positional: bool = True
    mlp_dims: tuple[int, ...] = (64,)
    dropout: float = 0.5


# --- prepared samples -------------------------------------------------------


@dataclass
class PreparedGraph:
    adj: object  # csr_array, symmetric-normalized with self loops
    x: np.ndarray
    n: int


@dataclass
class PreparedSequence:
    frames: list[PreparedGraph]


def prepare_graph(g: StaticGraph) -> PreparedGraph:
    return PreparedGraph(adj=normalize_adjacency(g.n, g.edges), x=g.features, n=g.n)


def prepare_sequence(seq: DynamicGraphSequence) -> PreparedSequence:
    return PreparedSequence(frames=[prepare_graph(f) for f in seq.frames])


def uppertri_features(g: StaticGraph, feature_kind: str) -> np.ndarray:
    """Flattened strict upper triangle of the correlation block, 1 x n(n-1)/2."""
    if feature_kind == "bold":
        raise ValidationError("mlp baseline needs correlation node features")
    if g.feature_dim < g.n:
        raise DimensionError(
            f"features are {g.features.shape}; expected a leading {g.n}x{g.n} block"
        )
    corr = g.features[:, : g.n]
    if np.abs(np.diag(corr) - 1.0).max(initial=0.0) > 1e-6:
        raise ValidationError("leading feature block does not look like correlations")
    iu, ju = np.triu_indices(g.n, k=1)
    return corr[iu, ju][None, :]


# --- shared helpers ---------------------------------------------------------


def _head_weights(params: Params, prefix: str):
    weights = []
    i = 0
    while f"{prefix}{i}_w" in params:
        weights.append((params[f"{prefix}{i}_w"], params[f"{prefix}{i}_b"]))
        i += 1
    return weights


def _init_head(params: Params, rng, prefix: str, dims: list[int]) -> None:
    for i, (d_in, d_out) in enumerate(zip(dims[:-1], dims[1:])):
        params[f"{prefix}{i}_w"] = glorot_uniform(rng, d_in, d_out)
        params[f"{prefix}{i}_b"] = np.zeros(d_out)


def _head_grads(grads: dict, prefix: str, layer_grads) -> None:
    for i, (dw, db) in enumerate(layer_grads):
        grads[f"{prefix}{i}_w"] = dw
        grads[f"{prefix}{i}_b"] = db


def resolve_sort_k(sort_k: int | None, n_nodes: int) -> int:
    return sort_k if sort_k is not None else min(n_nodes, DEFAULT_SORT_K_CAP)


# --- GNN* -------------------------------------------------------------------


def init_gnnstar(
    cfg: GnnStarConfig, in_dim: int, out_dim: int, n_nodes: int, seed: int
) -> Params:
    rng = np.random.default_rng(seed)
    params = Params(init_seed=seed)
    d_prev = in_dim
    for l in range(1, cfg.num_layers + 1):
        params[f"conv{l}_w"] = glorot_uniform(rng, d_prev, cfg.hidden_dim)
        if cfg.residual and d_prev != cfg.hidden_dim:
            params[f"res{l}_w"] = glorot_uniform(rng, d_prev, cfg.hidden_dim)
        d_prev = cfg.hidden_dim
    concat_dim = cfg.num_layers * cfg.hidden_dim
    if cfg.readout == "sort_pool":
        head_in = resolve_sort_k(cfg.sort_k, n_nodes) * concat_dim
    else:
        head_in = concat_dim
    _init_head(params, rng, "head", [head_in, *cfg.mlp_dims, out_dim])
    return params


def _gnnstar_trunk_forward(pg: PreparedGraph, params: Params, cfg: GnnStarConfig):
    h = pg.x
    outputs = []
    caches = []
    for l in range(1, cfg.num_layers + 1):
        conv, gcn_cache = gcn_forward(pg.adj, h, params[f"conv{l}_w"])
        res_name = f"res{l}_w"
        if res_name in params:
            mode = "proj"
            h_new = conv + h @ params[res_name]
        elif cfg.residual and h.shape[1] == conv.shape[1]:
            mode = "identity"
            h_new = conv + h
        else:
            mode = "none"
            h_new = conv
        caches.append((gcn_cache, mode, h, l))
        outputs.append(h_new)
        h = h_new
    return np.hstack(outputs), (caches, cfg.hidden_dim, params)


def _gnnstar_trunk_backward(d_concat: np.ndarray, trunk_cache):
    caches, hidden, params = trunk_cache
    n_layers = len(caches)
    grads: dict[str, np.ndarray] = {}
    d_next = np.zeros((d_concat.shape[0], hidden))
    for l in range(n_layers, 0, -1):
        gcn_cache, mode, h_in, _ = caches[l - 1]
        dh = d_concat[:, (l - 1) * hidden : l * hidden] + d_next
        dx, dw = gcn_backward(dh, gcn_cache)
        grads[f"conv{l}_w"] = dw
        d_prev = dx
        if mode == "proj":
            grads[f"res{l}_w"] = h_in.T @ dh
            d_prev = d_prev + dh @ params[f"res{l}_w"].T
        elif mode == "identity":
            d_prev = d_prev + dh
        d_next = d_prev
    return d_next, grads


def _readout_forward(concat: np.ndarray, cfg: GnnStarConfig, n_nodes: int):
    if cfg.readout == "mean":
        return concat.mean(axis=0, keepdims=True), ("mean", n_nodes, concat.shape[1])
    k = resolve_sort_k(cfg.sort_k, n_nodes)
    pooled, cache = sort_pool_forward(concat, k)
    return pooled, ("sort_pool", cache)


def _readout_backward(de: np.ndarray, cache):
    if cache[0] == "mean":
        _, n_nodes, dim = cache
        return np.repeat(de / n_nodes, n_nodes, axis=0)
    return sort_pool_backward(de, cache[1])


def gnnstar_embed(pg: PreparedGraph, params: Params, cfg: GnnStarConfig):
    """Graph embedding before the head (readout of concatenated layers)."""
    concat, trunk_cache = _gnnstar_trunk_forward(pg, params, cfg)
    emb, ro_cache = _readout_forward(concat, cfg, pg.n)
    return emb, (trunk_cache, ro_cache)


def gnnstar_forward(
    pg: PreparedGraph,
    params: Params,
    cfg: GnnStarConfig,
    train: bool = False,
    rng: np.random.Generator | None = None,
):
    emb, emb_cache = gnnstar_embed(pg, params, cfg)
    out, head_cache = mlp_forward(
        emb, _head_weights(params, "head"), cfg.dropout, train, rng
    )
    return out, (emb_cache, head_cache)


def gnnstar_backward(cache, d_out: np.ndarray) -> dict[str, np.ndarray]:
    (trunk_cache, ro_cache), head_cache = cache
    d_emb, head_grads = mlp_backward(d_out, head_cache)
    d_concat = _readout_backward(d_emb, ro_cache)
    _, grads = _gnnstar_trunk_backward(d_concat, trunk_cache)
    _head_grads(grads, "head", head_grads)
    return grads


# --- GCN baseline -----------------------------------------------------------


def init_gcn_baseline(
    cfg: GcnBaselineConfig, in_dim: int, out_dim: int, n_nodes: int, seed: int
) -> Params:
    rng = np.random.default_rng(seed)
    params = Params(init_seed=seed)
    d_prev = in_dim
    for l in range(1, cfg.num_layers + 1):
        params[f"conv{l}_w"] = glorot_uniform(rng, d_prev, cfg.hidden_dim)
        d_prev = cfg.hidden_dim
    k = resolve_sort_k(cfg.sort_k, n_nodes)
    _init_head(params, rng, "head", [k * cfg.hidden_dim, *cfg.mlp_dims, out_dim])
    return params


def gcn_baseline_forward(
    pg: PreparedGraph,
    params: Params,
    cfg: GcnBaselineConfig,
    train: bool = False,
    rng: np.random.Generator | None = None,
):
    h = pg.x
    conv_caches = []
    for l in range(1, cfg.num_layers + 1):
        h, c = gcn_forward(pg.adj, h, params[f"conv{l}_w"])
        conv_caches.append(c)
    pooled, pool_cache = sort_pool_forward(h, resolve_sort_k(cfg.sort_k, pg.n))
    out, head_cache = mlp_forward(
        pooled, _head_weights(params, "head"), cfg.dropout, train, rng
    )
    return out, (conv_caches, pool_cache, head_cache)


def gcn_baseline_backward(cache, d_out: np.ndarray) -> dict[str, np.ndarray]:
    conv_caches, pool_cache, head_cache = cache
    d_pooled, head_grads = mlp_backward(d_out, head_cache)
    dh = sort_pool_backward(d_pooled, pool_cache)
    grads: dict[str, np.ndarray] = {}
    for l in range(len(conv_caches), 0, -1):
        dh, dw = gcn_backward(dh, conv_caches[l - 1])
        grads[f"conv{l}_w"] = dw
    _head_grads(grads, "head", head_grads)
    return grads


# --- MLP baseline -----------------------------------------------------------


def init_mlp_baseline(
    cfg: MlpBaselineConfig, in_dim: int, out_dim: int, n_nodes: int, seed: int
) -> Params:
    del n_nodes
    rng = np.random.default_rng(seed)
    params = Params(init_seed=seed)
    _init_head(params, rng, "fc", [in_dim, *cfg.hidden_dims, out_dim])
    return params


def mlp_baseline_forward(
    x: np.ndarray,
    params: Params,
    cfg: MlpBaselineConfig,
    train: bool = False,
    rng: np.random.Generator | None = None,
):
    return mlp_forward(x, _head_weights(params, "fc"), cfg.dropout, train, rng)


def mlp_baseline_backward(cache, d_out: np.ndarray) -> dict[str, np.ndarray]:
    _, layer_grads = mlp_backward(d_out, cache)
    grads: dict[str, np.ndarray] = {}
    _head_grads(grads, "fc", layer_grads)
    return grads


# --- dynamic model ----------------------------------------------------------


def init_dyn(
    cfg: DynConfig, in_dim: int, out_dim: int, n_nodes: int, seed: int
) -> Params:
    if cfg.trunk.readout != "mean":
        raise ValidationError("dynamic trunk uses mean readout per frame")
    rng = np.random.default_rng(seed)
    params = Params(init_seed=seed)
    d_prev = in_dim
    for l in range(1, cfg.trunk.num_layers + 1):
        params[f"conv{l}_w"] = glorot_uniform(rng, d_prev, cfg.trunk.hidden_dim)
        if cfg.trunk.residual and d_prev != cfg.trunk.hidden_dim:
            params[f"res{l}_w"] = glorot_uniform(rng, d_prev, cfg.trunk.hidden_dim)
        d_prev = cfg.trunk.hidden_dim
    d_embed = cfg.trunk.num_layers * cfg.trunk.hidden_dim
    for name in ("att_wq", "att_wk", "att_wv"):
        params[name] = glorot_uniform(rng, d_embed, d_embed)
    _init_head(params, rng, "head", [d_embed, *cfg.mlp_dims, out_dim])
    return params


def dyn_forward(
    seq: PreparedSequence,
    params: Params,
    cfg: DynConfig,
    train: bool = False,
    rng: np.random.Generator | None = None,
):
    """Embed every frame with the shared trunk, attend over frames, average."""
    if not seq.frames:
        raise ValidationError("dynamic sequence has no frames")
    rows = []
    frame_caches = []
    for pg in seq.frames:
        emb, emb_cache = gnnstar_embed(pg, params, cfg.trunk)
        rows.append(emb[0])
        frame_caches.append((emb_cache, pg.n))
    s = np.vstack(rows)
    att_out, att_cache = attention_forward(
        s, params["att_wq"], params["att_wk"], params["att_wv"], cfg.positional
    )
    h_dyn = att_out.mean(axis=0, keepdims=True)
    out, head_cache = mlp_forward(
        h_dyn, _head_weights(params, "head"), cfg.dropout, train, rng
    )
    return out, (frame_caches, att_cache, head_cache, len(seq.frames))


def dyn_backward(cache, d_out: np.ndarray) -> dict[str, np.ndarray]:
    frame_caches, att_cache, head_cache, n_frames = cache
    d_h_dyn, head_grads = mlp_backward(d_out, head_cache)
    d_att_out = np.repeat(d_h_dyn / n_frames, n_frames, axis=0)
    d_s, dwq, dwk, dwv = attention_backward(d_att_out, att_cache)
    grads: dict[str, np.ndarray] = {"att_wq": dwq, "att_wk": dwk, "att_wv": dwv}
    for t, (emb_cache, _) in enumerate(frame_caches):
        trunk_cache, ro_cache = emb_cache
        d_concat = _readout_backward(d_s[t : t + 1], ro_cache)
        _, frame_grads = _gnnstar_trunk_backward(d_concat, trunk_cache)
        for name, g in frame_grads.items():
            grads[name] = grads.get(name, 0.0) + g
    _head_grads(grads, "head", head_grads)
    return grads


# --- registry ---------------------------------------------------------------


@dataclass(frozen=True)
class ModelDef:
    name: str
    default_config: object
    init: object
    forward: object
    backward: object


MODELS: dict[str, ModelDef] = {
    "gnnstar": ModelDef(
        "gnnstar", GnnStarConfig(), init_gnnstar, gnnstar_forward, gnnstar_backward
    ),
    "gcn": ModelDef(
        "gcn",
        GcnBaselineConfig(),
        init_gcn_baseline,
        gcn_baseline_forward,
        gcn_baseline_backward,
    ),
    "mlp": ModelDef(
        "mlp",
        MlpBaselineConfig(),
        init_mlp_baseline,
        mlp_baseline_forward,
        mlp_baseline_backward,
    ),
    "dyn": ModelDef("dyn", DynConfig(), init_dyn, dyn_forward, dyn_backward),
}

_ARCHITECTURE_NOTES = {
    "gnnstar": [
        "batch normalization omitted: single-graph batches and deterministic "
        "gradient checks make it ill-defined",
        "layer concatenation covers hidden layers 1..L; raw input features "
        "are not included",
    ],
    "gcn": [
        "post-pooling 1-D convolutions replaced by flatten + MLP head",
    ],
    "mlp": [],
    "dyn": [
        "frame embeddings use the mean readout of the shared trunk",
        "positional information enters via a fixed sinusoidal table",
    ],
}


def model_card(
    model_kind: str, config, in_dim: int, out_dim: int, n_nodes: int, seed: int
) -> dict:
    """JSON-ready record of what was instantiated and how it deviates."""
    return {
        "model": model_kind,
        "config": asdict(config),
        "input_dim": in_dim,
        "output_dim": out_dim,
        "n_nodes": n_nodes,
        "init_seed": seed,
        "architecture_notes": _ARCHITECTURE_NOTES.get(model_kind, []),
    }
