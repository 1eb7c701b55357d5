import numpy as np
import pytest

from fcgraph.errors import DimensionError, FcgraphError, ValidationError
from fcgraph.nn import (
    AdamState,
    adam_step,
    attention_backward,
    attention_forward,
    cross_entropy,
    dropout_forward,
    gcn_backward,
    gcn_forward,
    grad_check,
    load_checkpoint,
    mae,
    mlp_backward,
    mlp_forward,
    normalize_adjacency,
    save_checkpoint,
    sinusoidal_encoding,
    softmax,
    sort_pool_backward,
    sort_pool_forward,
)
from fcgraph.nn.params import Params, glorot_uniform


def _random_adj(rng, n, p=0.4):
    iu, ju = np.triu_indices(n, k=1)
    mask = rng.random(iu.size) < p
    edges = [(int(i), int(j)) for i, j in zip(iu[mask], ju[mask])]
    return normalize_adjacency(n, edges)


# --- graph convolution -------------------------------------------------------


def test_gcn_isolated_node_identity_weights():
    adj = normalize_adjacency(1, [])
    out, _ = gcn_forward(adj, np.array([[3.0, -2.0]]), np.eye(2))
    assert out.tolist() == [[3.0, 0.0]]


def test_gcn_two_connected_nodes():
    # A+I is all-ones, degrees 2, so every normalized entry is 1/2
    adj = normalize_adjacency(2, [(0, 1)])
    out, _ = gcn_forward(adj, np.eye(2), np.eye(2))
    assert np.allclose(out, 0.5)


def test_gcn_shape_mismatch():
    adj = normalize_adjacency(2, [(0, 1)])
    with pytest.raises(DimensionError):
        gcn_forward(adj, np.ones((3, 2)), np.eye(2))
    with pytest.raises(DimensionError):
        gcn_forward(adj, np.ones((2, 3)), np.eye(2))


def test_gcn_grad_check():
    rng = np.random.default_rng(0)
    adj = _random_adj(rng, 6)
    w_out = rng.standard_normal((6, 3))
    p = Params()
    p["x"] = rng.standard_normal((6, 4))
    p["w"] = rng.standard_normal((4, 3))

    def closure(params):
        out, cache = gcn_forward(adj, params["x"], params["w"])
        dx, dw = gcn_backward(w_out, cache)
        return float((out * w_out).sum()), {"x": dx, "w": dw}

    report = grad_check(closure, p, rng=np.random.default_rng(1), tolerance=1e-6)
    assert report.passed, str(report)


# --- MLP ----------------------------------------------------------------------


def test_mlp_zero_weights_bias_broadcast():
    w = [(np.zeros((4, 3)), np.array([1.0, -2.0, 0.5]))]
    out, _ = mlp_forward(np.ones((2, 4)), w)
    assert np.array_equal(out, np.tile([1.0, -2.0, 0.5], (2, 1)))


def test_mlp_dropout_zero_is_deterministic():
    rng = np.random.default_rng(0)
    w = [(rng.standard_normal((4, 5)), np.zeros(5)), (rng.standard_normal((5, 2)), np.zeros(2))]
    x = rng.standard_normal((3, 4))
    a, _ = mlp_forward(x, w, dropout_rate=0.0, train=True, rng=np.random.default_rng(1))
    b, _ = mlp_forward(x, w, dropout_rate=0.0, train=True, rng=np.random.default_rng(2))
    assert np.array_equal(a, b)


def test_mlp_dropout_inverted_scaling():
    x = np.ones((1, 1000))
    y, mask = dropout_forward(x, 0.5, np.random.default_rng(3), train=True)
    kept = y[y != 0]
    assert np.allclose(kept, 2.0)  # scaled by 1/(1-p)
    assert abs(y.mean() - 1.0) < 0.15  # unbiased in expectation
    eval_y, eval_mask = dropout_forward(x, 0.5, None, train=False)
    assert eval_mask is None
    assert np.array_equal(eval_y, x)


def test_dropout_rate_validation():
    with pytest.raises(ValidationError):
        dropout_forward(np.ones((1, 2)), 1.0, np.random.default_rng(0), True)
    with pytest.raises(ValidationError):
        dropout_forward(np.ones((1, 2)), -0.1, np.random.default_rng(0), True)


def test_mlp_grad_check():
    rng = np.random.default_rng(5)
    p = Params()
    p["w0"] = rng.standard_normal((6, 5))
    p["b0"] = rng.standard_normal(5)
    p["w1"] = rng.standard_normal((5, 2))
    p["b1"] = rng.standard_normal(2)
    x = rng.standard_normal((3, 6))
    w_out = rng.standard_normal((3, 2))

    def closure(params):
        weights = [(params["w0"], params["b0"]), (params["w1"], params["b1"])]
        out, cache = mlp_forward(x, weights)
        _, grads = mlp_backward(w_out, cache)
        return float((out * w_out).sum()), {
            "w0": grads[0][0], "b0": grads[0][1], "w1": grads[1][0], "b1": grads[1][1],
        }

    report = grad_check(closure, p, rng=np.random.default_rng(1), tolerance=1e-6)
    assert report.passed, str(report)


# --- sort pooling -------------------------------------------------------------


def test_sort_pool_orders_by_last_channel():
    h = np.array([[10.0, 0.1], [20.0, 0.9], [30.0, 0.5]])
    out, _ = sort_pool_forward(h, k=2)
    assert out.tolist() == [[20.0, 0.9, 30.0, 0.5]]


def test_sort_pool_pads_when_k_exceeds_n():
    h = np.array([[1.0, 2.0]])
    out, _ = sort_pool_forward(h, k=3)
    assert out.tolist() == [[1.0, 2.0, 0.0, 0.0, 0.0, 0.0]]


def test_sort_pool_stable_on_ties():
    h = np.array([[1.0, 0.5], [2.0, 0.5], [3.0, 0.5]])
    out, _ = sort_pool_forward(h, k=3)
    assert out.tolist() == [[1.0, 0.5, 2.0, 0.5, 3.0, 0.5]]


def test_sort_pool_permutation_invariant_distinct_keys():
    rng = np.random.default_rng(6)
    h = rng.standard_normal((7, 3))
    perm = rng.permutation(7)
    a, _ = sort_pool_forward(h, k=4)
    b, _ = sort_pool_forward(h[perm], k=4)
    assert np.array_equal(a, b)


def test_sort_pool_backward_routes_to_selected_rows():
    h = np.array([[10.0, 0.1], [20.0, 0.9], [30.0, 0.5]])
    out, cache = sort_pool_forward(h, k=2)
    dh = sort_pool_backward(np.ones_like(out), cache)
    assert dh.tolist() == [[0.0, 0.0], [1.0, 1.0], [1.0, 1.0]]


# --- attention ----------------------------------------------------------------


def test_attention_single_frame_is_v_projection():
    rng = np.random.default_rng(7)
    s = rng.standard_normal((1, 4))
    wq, wk, wv = (rng.standard_normal((4, 4)) for _ in range(3))
    out, _ = attention_forward(s, wq, wk, wv, positional=True)
    expected = (s + sinusoidal_encoding(1, 4)) @ wv
    assert np.allclose(out, expected, atol=1e-12)


def test_attention_identical_frames_no_positional():
    rng = np.random.default_rng(8)
    row = rng.standard_normal((1, 5))
    s = np.repeat(row, 4, axis=0)
    wq, wk, wv = (rng.standard_normal((5, 5)) for _ in range(3))
    out, _ = attention_forward(s, wq, wk, wv, positional=False)
    assert np.allclose(out - out[0], 0.0, atol=1e-12)
    assert np.allclose(out[0], (row @ wv)[0], atol=1e-12)


def test_attention_rows_are_convex_mixtures():
    rng = np.random.default_rng(9)
    s = rng.standard_normal((5, 3))
    wq, wk, wv = (rng.standard_normal((3, 3)) for _ in range(3))
    _, cache = attention_forward(s, wq, wk, wv)
    att = cache[4]
    assert np.abs(att.sum(axis=1) - 1.0).max() < 1e-12
    assert att.min() >= 0.0


def test_attention_shape_mismatch():
    s = np.ones((2, 3))
    with pytest.raises(DimensionError):
        attention_forward(s, np.ones((4, 4)), np.ones((3, 3)), np.ones((3, 3)))


def test_attention_grad_check():
    rng = np.random.default_rng(10)
    p = Params()
    p["s"] = rng.standard_normal((3, 4))
    for name in ("wq", "wk", "wv"):
        p[name] = rng.standard_normal((4, 4))
    w_out = rng.standard_normal((3, 4))

    def closure(params):
        out, cache = attention_forward(
            params["s"], params["wq"], params["wk"], params["wv"], positional=True
        )
        ds, dwq, dwk, dwv = attention_backward(w_out, cache)
        return float((out * w_out).sum()), {"s": ds, "wq": dwq, "wk": dwk, "wv": dwv}

    report = grad_check(closure, p, rng=np.random.default_rng(1), tolerance=1e-6)
    assert report.passed, str(report)


def test_sinusoidal_encoding_basics():
    enc = sinusoidal_encoding(4, 6)
    assert enc.shape == (4, 6)
    assert np.allclose(enc[0, 0::2], 0.0)  # sin(0)
    assert np.allclose(enc[0, 1::2], 1.0)  # cos(0)
    odd = sinusoidal_encoding(3, 5)
    assert odd.shape == (3, 5)


# --- losses ---------------------------------------------------------------


def test_cross_entropy_uniform_logits():
    loss, _ = cross_entropy(np.zeros((1, 2)), np.array([0]))
    assert abs(loss - np.log(2)) < 1e-12


def test_cross_entropy_grad_is_softmax_minus_onehot():
    rng = np.random.default_rng(11)
    z = rng.standard_normal((1, 4))
    loss, grad = cross_entropy(z, np.array([2]))
    expected = softmax(z)
    expected[0, 2] -= 1.0
    assert np.allclose(grad, expected, atol=1e-12)
    assert abs(grad.sum()) < 1e-10  # rows of the CE gradient sum to zero


def test_cross_entropy_stable_for_huge_logits():
    loss, grad = cross_entropy(np.array([[1000.0, -1000.0]]), np.array([0]))
    assert np.isfinite(loss) and loss < 1e-10
    assert np.all(np.isfinite(grad))


def test_cross_entropy_bad_class():
    with pytest.raises(ValidationError):
        cross_entropy(np.zeros((1, 3)), np.array([3]))
    with pytest.raises(ValidationError):
        cross_entropy(np.zeros((1, 3)), np.array([0.5]))


def test_cross_entropy_matches_finite_differences():
    rng = np.random.default_rng(12)
    p = Params()
    p["z"] = rng.standard_normal((2, 5))
    targets = np.array([1, 4])

    def closure(params):
        loss, grad = cross_entropy(params["z"], targets)
        return loss, {"z": grad}

    report = grad_check(closure, p, rng=np.random.default_rng(1), tolerance=1e-8)
    assert report.passed, str(report)


def test_mae_zero_at_equality():
    loss, grad = mae(np.array([[1.5]]), np.array([[1.5]]))
    assert loss == 0.0
    assert grad.shape == (1, 1)


def test_mae_value_and_grad():
    loss, grad = mae(np.array([[1.0], [3.0]]), np.array([[2.0], [1.0]]))
    assert abs(loss - 1.5) < 1e-15
    assert grad.tolist() == [[-0.5], [0.5]]


def test_softmax_rows_sum_to_one():
    rng = np.random.default_rng(13)
    s = softmax(rng.standard_normal((6, 9)) * 50)
    assert np.abs(s.sum(axis=1) - 1.0).max() < 1e-12


# --- Adam -------------------------------------------------------------------


def test_adam_zero_grad_no_decay_is_identity():
    p = Params()
    p["w"] = np.array([[1.0, -2.0]])
    state = AdamState.for_params(p)
    adam_step(p, {"w": np.zeros((1, 2))}, state, lr=0.01, weight_decay=0.0)
    assert p["w"].tolist() == [[1.0, -2.0]]


def test_adam_first_step_magnitude():
    p = Params()
    p["w"] = np.array([[0.5]])
    state = AdamState.for_params(p)
    adam_step(p, {"w": np.array([[1.0]])}, state, lr=1e-3, weight_decay=0.0)
    # bias-corrected first step equals lr / (1 + eps) ~ lr
    assert abs((0.5 - p["w"][0, 0]) - 1e-3) < 1e-10


def test_adam_decay_only_path():
    p = Params()
    p["w"] = np.array([[2.0]])
    state = AdamState.for_params(p)
    adam_step(p, {"w": np.zeros((1, 1))}, state, lr=0.1, weight_decay=0.5)
    assert abs(p["w"][0, 0] - 2.0 * (1 - 0.1 * 0.5)) < 1e-15


def test_adam_missing_grad_rejected():
    p = Params()
    p["w"] = np.ones((1, 1))
    state = AdamState.for_params(p)
    with pytest.raises(ValidationError):
        adam_step(p, {}, state, lr=0.1)


# --- gradient checker ---------------------------------------------------------


def test_grad_check_linear_model_tight():
    rng = np.random.default_rng(14)
    a = rng.standard_normal((5, 5))
    p = Params()
    p["x"] = rng.standard_normal((5, 1))

    def closure(params):
        return float((a @ params["x"]).sum()), {"x": a.T @ np.ones((5, 1))}

    report = grad_check(closure, p, rng=np.random.default_rng(1), tolerance=1e-9)
    assert report.passed, str(report)


def test_grad_check_negative_control():
    rng = np.random.default_rng(15)
    p = Params()
    p["x"] = rng.standard_normal((4, 4))

    def corrupted(params):
        return float((params["x"] ** 2).sum()), {"x": 3.0 * params["x"]}  # wrong factor

    report = grad_check(corrupted, p, rng=np.random.default_rng(1))
    assert not report.passed
    assert report.max_rel_error > 0.1


def test_grad_check_nonfinite_loss():
    p = Params()
    p["x"] = np.ones((1, 1))

    def bad(params):
        return float("nan"), {"x": np.zeros((1, 1))}

    with pytest.raises(FcgraphError):
        grad_check(bad, p)


# --- checkpoints ----------------------------------------------------------------


def test_checkpoint_round_trip(tmp_path):
    rng = np.random.default_rng(16)
    p = Params(init_seed=7)
    p["w"] = glorot_uniform(rng, 4, 3)
    p["b"] = rng.standard_normal(3)
    save_checkpoint(p, tmp_path, extra={"model": "demo"})
    back, extra = load_checkpoint(tmp_path)
    assert extra == {"model": "demo"}
    assert back.init_seed == 7
    assert np.array_equal(back["w"], p["w"])
    assert back["b"].shape == (3,)
    assert np.array_equal(back["b"], p["b"])
