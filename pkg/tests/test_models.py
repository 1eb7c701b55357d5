import numpy as np
import pytest

from fcgraph.errors import ValidationError
from fcgraph.models import (
    DynConfig,
    GcnBaselineConfig,
    GnnStarConfig,
    MlpBaselineConfig,
    PreparedGraph,
    PreparedSequence,
    dyn_backward,
    dyn_forward,
    gcn_baseline_backward,
    gcn_baseline_forward,
    gnnstar_backward,
    gnnstar_embed,
    gnnstar_forward,
    init_dyn,
    init_gcn_baseline,
    init_gnnstar,
    init_mlp_baseline,
    mlp_baseline_backward,
    mlp_baseline_forward,
    model_card,
    prepare_graph,
    uppertri_features,
)
from fcgraph.graph_build import StaticGraph
from fcgraph.nn import (
    attention_forward,
    cross_entropy,
    gcn_forward,
    grad_check,
    mlp_forward,
    normalize_adjacency,
)
from fcgraph.nn.params import Params


def _prepared(rng, n=10, d=6, p=0.35):
    iu, ju = np.triu_indices(n, k=1)
    mask = rng.random(iu.size) < p
    edges = [(int(i), int(j)) for i, j in zip(iu[mask], ju[mask])]
    return PreparedGraph(
        adj=normalize_adjacency(n, edges), x=rng.standard_normal((n, d)), n=n
    )


def _head_weights(params, prefix="head"):
    out = []
    i = 0
    while f"{prefix}{i}_w" in params:
        out.append((params[f"{prefix}{i}_w"], params[f"{prefix}{i}_b"]))
        i += 1
    return out


# --- GNN* ---------------------------------------------------------------------


def test_gnnstar_zero_network_outputs_zero():
    cfg = GnnStarConfig(num_layers=1, hidden_dim=4, readout="mean", mlp_dims=(), dropout=0.0)
    rng = np.random.default_rng(0)
    pg = _prepared(rng, n=6, d=3)
    params = init_gnnstar(cfg, 3, 2, 6, seed=1)
    for name in params.names():
        params[name] = np.zeros_like(params[name])
    out, _ = gnnstar_forward(pg, params, cfg)
    assert np.array_equal(out, np.zeros((1, 2)))


def test_gnnstar_concat_dimension():
    cfg = GnnStarConfig(num_layers=3, hidden_dim=64, readout="mean", dropout=0.0)
    params = init_gnnstar(cfg, 20, 2, 20, seed=2)
    assert params["head0_w"].shape == (192, 64)  # 3 * 64 concatenated channels
    cfg_sp = GnnStarConfig(num_layers=3, hidden_dim=64, readout="sort_pool", dropout=0.0)
    params_sp = init_gnnstar(cfg_sp, 20, 2, 20, seed=2)
    assert params_sp["head0_w"].shape == (20 * 192, 64)  # k=min(n,64)=20


def test_gnnstar_residual_projection_only_on_dim_change():
    cfg = GnnStarConfig(num_layers=3, hidden_dim=8, dropout=0.0)
    params = init_gnnstar(cfg, 5, 2, 10, seed=3)
    assert "res1_w" in params  # 5 -> 8 needs a projection
    assert "res2_w" not in params  # 8 -> 8 uses the identity
    assert "res3_w" not in params
    params_same = init_gnnstar(GnnStarConfig(num_layers=2, hidden_dim=5, dropout=0.0), 5, 2, 10, seed=3)
    assert "res1_w" not in params_same


def test_gnnstar_reduces_to_single_gcn_layer():
    # no residual, one layer, mean readout == plain graph convolution + mean
    cfg = GnnStarConfig(num_layers=1, hidden_dim=7, readout="mean", residual=False, dropout=0.0)
    rng = np.random.default_rng(4)
    pg = _prepared(rng, n=9, d=5)
    params = init_gnnstar(cfg, 5, 2, 9, seed=5)
    emb, _ = gnnstar_embed(pg, params, cfg)
    conv, _ = gcn_forward(pg.adj, pg.x, params["conv1_w"])
    assert np.abs(emb - conv.mean(axis=0, keepdims=True)).max() < 1e-12


def test_gnnstar_permutation_invariance_mean_readout():
    cfg = GnnStarConfig(num_layers=2, hidden_dim=6, readout="mean", dropout=0.0)
    rng = np.random.default_rng(5)
    n, d = 8, 4
    iu, ju = np.triu_indices(n, k=1)
    mask = rng.random(iu.size) < 0.4
    edges = [(int(i), int(j)) for i, j in zip(iu[mask], ju[mask])]
    x = rng.standard_normal((n, d))
    perm = rng.permutation(n)
    inv = np.argsort(perm)
    pg = PreparedGraph(adj=normalize_adjacency(n, edges), x=x, n=n)
    edges_p = [tuple(sorted((int(inv[a]), int(inv[b])))) for a, b in edges]
    pg_p = PreparedGraph(adj=normalize_adjacency(n, edges_p), x=x[perm], n=n)
    params = init_gnnstar(cfg, d, 3, n, seed=6)
    out, _ = gnnstar_forward(pg, params, cfg)
    out_p, _ = gnnstar_forward(pg_p, params, cfg)
    assert np.abs(out - out_p).max() < 1e-12


def test_gnnstar_grad_check():
    cfg = GnnStarConfig(num_layers=3, hidden_dim=5, readout="sort_pool", sort_k=4,
                        mlp_dims=(6,), dropout=0.0)
    rng = np.random.default_rng(7)
    pg = _prepared(rng, n=10, d=6)
    params = init_gnnstar(cfg, 6, 3, 10, seed=8)
    target = np.array([1])

    def closure(ps):
        out, cache = gnnstar_forward(pg, ps, cfg)
        loss, d_out = cross_entropy(out, target)
        return loss, gnnstar_backward(cache, d_out)

    report = grad_check(closure, params, rng=np.random.default_rng(1))
    assert report.passed, str(report)


# --- GCN baseline --------------------------------------------------------------


def test_gcn_baseline_permutation_invariance_distinct_keys():
    cfg = GcnBaselineConfig(num_layers=2, hidden_dim=5, sort_k=4, dropout=0.0)
    rng = np.random.default_rng(9)
    n, d = 8, 4
    iu, ju = np.triu_indices(n, k=1)
    mask = rng.random(iu.size) < 0.5
    edges = [(int(i), int(j)) for i, j in zip(iu[mask], ju[mask])]
    x = rng.standard_normal((n, d))
    perm = rng.permutation(n)
    inv = np.argsort(perm)
    pg = PreparedGraph(adj=normalize_adjacency(n, edges), x=x, n=n)
    pg_p = PreparedGraph(
        adj=normalize_adjacency(n, [tuple(sorted((int(inv[a]), int(inv[b])))) for a, b in edges]),
        x=x[perm], n=n,
    )
    params = init_gcn_baseline(cfg, d, 3, n, seed=10)
    out, _ = gcn_baseline_forward(pg, params, cfg)
    out_p, _ = gcn_baseline_forward(pg_p, params, cfg)
    assert np.abs(out - out_p).max() < 1e-10


def test_gcn_baseline_zero_pad_path():
    cfg = GcnBaselineConfig(num_layers=2, hidden_dim=4, sort_k=12, dropout=0.0)
    rng = np.random.default_rng(11)
    pg = _prepared(rng, n=5, d=3)
    params = init_gcn_baseline(cfg, 3, 2, 5, seed=12)
    out, _ = gcn_baseline_forward(pg, params, cfg)
    assert out.shape == (1, 2)
    assert np.all(np.isfinite(out))


def test_gcn_baseline_grad_check():
    cfg = GcnBaselineConfig(num_layers=3, hidden_dim=5, sort_k=4, mlp_dims=(6,), dropout=0.0)
    rng = np.random.default_rng(13)
    pg = _prepared(rng, n=9, d=5)
    params = init_gcn_baseline(cfg, 5, 2, 9, seed=14)

    def closure(ps):
        out, cache = gcn_baseline_forward(pg, ps, cfg)
        loss, d_out = cross_entropy(out, np.array([0]))
        return loss, gcn_baseline_backward(cache, d_out)

    report = grad_check(closure, params, rng=np.random.default_rng(1))
    assert report.passed, str(report)


# --- MLP baseline ----------------------------------------------------------------


def test_mlp_input_dim_from_uppertri():
    rng = np.random.default_rng(15)
    n = 100
    data = rng.standard_normal((40, n))
    z = (data - data.mean(0)) / data.std(0)
    corr = (z.T @ z) / 40
    corr = (corr + corr.T) / 2
    np.fill_diagonal(corr, 1.0)
    g = StaticGraph(n=n, edges=[], features=corr, label=0)
    feats = uppertri_features(g, "corr")
    assert feats.shape == (1, 4950)


def test_mlp_rejects_bold_features():
    g = StaticGraph(n=4, edges=[], features=np.zeros((4, 9)), label=0)
    with pytest.raises(ValidationError):
        uppertri_features(g, "bold")


def test_mlp_zero_input_zero_bias_zero_logits():
    cfg = MlpBaselineConfig(hidden_dims=(8, 4), dropout=0.0)
    params = init_mlp_baseline(cfg, 10, 3, 0, seed=16)
    out, _ = mlp_baseline_forward(np.zeros((1, 10)), params, cfg)
    assert np.array_equal(out, np.zeros((1, 3)))


def test_mlp_hidden_shape_512_256_128():
    cfg = MlpBaselineConfig()
    params = init_mlp_baseline(cfg, 4950, 2, 0, seed=17)
    assert params["fc0_w"].shape == (4950, 512)
    assert params["fc1_w"].shape == (512, 256)
    assert params["fc2_w"].shape == (256, 128)
    assert params["fc3_w"].shape == (128, 2)


def test_mlp_grad_check():
    cfg = MlpBaselineConfig(hidden_dims=(7, 5), dropout=0.0)
    rng = np.random.default_rng(18)
    params = init_mlp_baseline(cfg, 12, 2, 0, seed=19)
    x = rng.standard_normal((1, 12))

    def closure(ps):
        out, cache = mlp_baseline_forward(x, ps, cfg)
        loss, d_out = cross_entropy(out, np.array([1]))
        return loss, mlp_baseline_backward(cache, d_out)

    report = grad_check(closure, params, rng=np.random.default_rng(1), tolerance=1e-6)
    assert report.passed, str(report)


# --- dynamic model ----------------------------------------------------------------


def _sequence(rng, n_frames=3, n=8, d=5):
    return PreparedSequence(frames=[_prepared(rng, n=n, d=d) for _ in range(n_frames)])


def test_dyn_single_frame_matches_manual_composition():
    trunk = GnnStarConfig(num_layers=2, hidden_dim=4, readout="mean", dropout=0.0)
    cfg = DynConfig(trunk=trunk, positional=True, mlp_dims=(5,), dropout=0.0)
    rng = np.random.default_rng(20)
    seq = _sequence(rng, n_frames=1, n=6, d=5)
    params = init_dyn(cfg, 5, 2, 6, seed=21)
    out, _ = dyn_forward(seq, params, cfg)

    emb, _ = gnnstar_embed(seq.frames[0], params, trunk)
    att, _ = attention_forward(emb, params["att_wq"], params["att_wk"], params["att_wv"], True)
    manual, _ = mlp_forward(att, _head_weights(params))
    assert np.abs(out - manual).max() < 1e-12


def test_dyn_identical_frames_mean_equals_single():
    trunk = GnnStarConfig(num_layers=2, hidden_dim=4, readout="mean", dropout=0.0)
    cfg = DynConfig(trunk=trunk, positional=False, mlp_dims=(5,), dropout=0.0)
    rng = np.random.default_rng(22)
    frame = _prepared(rng, n=6, d=5)
    seq = PreparedSequence(frames=[frame, frame, frame])
    params = init_dyn(cfg, 5, 2, 6, seed=23)
    out, _ = dyn_forward(seq, params, cfg)

    emb, _ = gnnstar_embed(frame, params, trunk)
    attended = emb @ params["att_wv"]  # uniform attention over identical rows
    manual, _ = mlp_forward(attended, _head_weights(params))
    assert np.abs(out - manual).max() < 1e-12


def test_dyn_empty_sequence_rejected():
    cfg = DynConfig(trunk=GnnStarConfig(num_layers=1, hidden_dim=3, readout="mean", dropout=0.0),
                    dropout=0.0)
    params = init_dyn(cfg, 4, 2, 5, seed=24)
    with pytest.raises(ValidationError):
        dyn_forward(PreparedSequence(frames=[]), params, cfg)


def test_dyn_grad_check_three_frames():
    trunk = GnnStarConfig(num_layers=2, hidden_dim=5, readout="mean", dropout=0.0)
    cfg = DynConfig(trunk=trunk, positional=True, mlp_dims=(6,), dropout=0.0)
    rng = np.random.default_rng(25)
    seq = _sequence(rng, n_frames=3, n=8, d=6)
    params = init_dyn(cfg, 6, 2, 8, seed=26)

    def closure(ps):
        out, cache = dyn_forward(seq, ps, cfg)
        loss, d_out = cross_entropy(out, np.array([0]))
        return loss, dyn_backward(cache, d_out)

    report = grad_check(closure, params, rng=np.random.default_rng(1))
    assert report.passed, str(report)


def test_model_card_lists_deviations():
    cfg = GnnStarConfig()
    card = model_card("gnnstar", cfg, 20, 2, 20, 123)
    assert card["model"] == "gnnstar"
    assert card["config"]["hidden_dim"] == 64
    assert any("batch normalization" in note for note in card["architecture_notes"])


def test_prepare_graph_roundtrip(small_graphs):
    pg = prepare_graph(small_graphs[0])
    assert pg.n == small_graphs[0].n
    assert pg.adj.shape == (pg.n, pg.n)
