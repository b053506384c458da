"""Dense-network engine: activations, losses, gradients, Adam, training loop."""

import math

import numpy as np
import pytest

from arrkit.nn import (
    AdamState,
    DenseNet,
    LossSpec,
    TrainConfig,
    TrainingDiverged,
    adam_step,
    clip_global_norm,
    copy_params,
    dropout_mask,
    elu,
    fit_term,
    forward,
    gradient_check,
    init_params,
    loss_and_grads,
    relu,
    sigmoid,
    train_dense_net,
)


# ---------------------------------------------------------------------------
# activations


def test_elu_matches_piecewise_definition():
    z = np.array([-3.0, -0.5, 0.0, 0.5, 3.0])
    expected = np.where(z > 0, z, np.array([math.expm1(v) for v in np.minimum(z, 0.0)]))
    np.testing.assert_allclose(elu(z), expected, rtol=0, atol=0)


def test_relu_matches_max_zero():
    z = np.array([-2.0, -1e-12, 0.0, 1e-12, 7.0])
    np.testing.assert_array_equal(relu(z), np.maximum(z, 0.0))


def test_sigmoid_matches_logistic_and_stays_finite():
    z = np.array([-4.0, -1.0, 0.0, 1.0, 4.0])
    np.testing.assert_allclose(sigmoid(z), 1.0 / (1.0 + np.exp(-z)), rtol=1e-15)
    extreme = sigmoid(np.array([-800.0, 800.0]))
    assert np.all(np.isfinite(extreme))
    assert extreme[0] == 0.0 and extreme[1] == 1.0


# ---------------------------------------------------------------------------
# network container and initialization


def test_dense_net_validates_shape_and_names():
    with pytest.raises(ValueError, match="one activation per weight layer"):
        DenseNet((3, 2, 1), ("elu",))
    with pytest.raises(ValueError, match="unknown activation"):
        DenseNet((3, 1), ("tanh",))
    with pytest.raises(ValueError, match="positive"):
        DenseNet((3, 0, 1), ("elu", "elu"))
    assert DenseNet((4, 2, 4), ("elu", "identity")).n_layers == 2


def test_init_params_bounds_shapes_and_zero_biases():
    net = DenseNet((7, 3, 2), ("elu", "identity"))
    params = init_params(net, np.random.default_rng(0))
    assert [(w.shape, b.shape) for w, b in params] == [((7, 3), (3,)), ((3, 2), (2,))]
    for (w, b), (fi, fo) in zip(params, [(7, 3), (3, 2)]):
        bound = math.sqrt(6.0 / (fi + fo))
        assert np.all(np.abs(w) <= bound)
        assert np.all(b == 0.0)


def test_init_params_deterministic_by_seed():
    net = DenseNet((5, 2), ("identity",))
    a = init_params(net, np.random.default_rng(42))
    b = init_params(net, np.random.default_rng(42))
    np.testing.assert_array_equal(a[0][0], b[0][0])


# ---------------------------------------------------------------------------
# dropout


def test_dropout_mask_is_inverted_and_unbiased():
    rng = np.random.default_rng(3)
    mask = dropout_mask(rng, (200, 50), 0.4)
    keep = 1.0 / 0.6
    assert set(np.unique(mask)) <= {0.0, keep}
    # inverted scaling keeps the expected value of the masked input at 1
    assert abs(mask.mean() - 1.0) < 0.02
    assert abs((mask == 0.0).mean() - 0.4) < 0.02


def test_dropout_mask_rate_zero_and_validation():
    np.testing.assert_array_equal(dropout_mask(np.random.default_rng(0), (3, 4), 0.0), np.ones((3, 4)))
    with pytest.raises(ValueError, match="dropout rate"):
        dropout_mask(np.random.default_rng(0), (2,), 1.0)
    with pytest.raises(ValueError, match="dropout rate"):
        dropout_mask(np.random.default_rng(0), (2,), -0.1)


# ---------------------------------------------------------------------------
# forward pass


def test_forward_matches_hand_computation():
    net = DenseNet((2, 2, 1), ("identity", "identity"))
    w1 = np.array([[1.0, 2.0], [3.0, 4.0]])
    b1 = np.array([0.5, -0.5])
    w2 = np.array([[2.0], [-1.0]])
    b2 = np.array([0.25])
    x = np.array([[1.0, -1.0], [0.5, 2.0]])
    out, caches = forward(net, [[w1, b1], [w2, b2]], x)
    np.testing.assert_allclose(out, (x @ w1 + b1) @ w2 + b2, rtol=0, atol=0)
    assert len(caches) == 2
    np.testing.assert_array_equal(caches[0][0], x)


def test_forward_promotes_vectors_and_applies_input_mask():
    net = DenseNet((3, 1), ("identity",))
    params = [[np.ones((3, 1)), np.zeros(1)]]
    out, _ = forward(net, params, np.array([1.0, 2.0, 3.0]))
    assert out.shape == (1, 1) and out[0, 0] == 6.0
    masked, _ = forward(net, params, np.array([1.0, 2.0, 3.0]), input_mask=np.array([0.0, 2.0, 0.0]))
    assert masked[0, 0] == 4.0


# ---------------------------------------------------------------------------
# losses


def test_loss_spec_validation():
    with pytest.raises(ValueError, match="unknown loss kind"):
        LossSpec(kind="huber")
    with pytest.raises(ValueError, match="non-negative"):
        LossSpec(l2_weight=-1.0)
    with pytest.raises(ValueError, match="l1_layer"):
        LossSpec(l1_weight=0.5)


def test_mse_fit_term_normalizes_by_batch_and_width():
    out = np.array([[1.0, 2.0], [3.0, 4.0]])
    y = np.array([[0.0, 2.0], [3.0, 1.0]])
    # squared error sum = 1 + 0 + 0 + 9 = 10, over B*D = 4
    assert fit_term(LossSpec("mse"), out, y) == pytest.approx(10.0 / 4.0, rel=0, abs=0)


def test_bce_fit_term_matches_direct_formula_and_is_stable():
    z = np.array([[-2.0], [0.5], [3.0]])
    y = np.array([[1.0], [0.0], [1.0]])
    p = 1.0 / (1.0 + np.exp(-z))
    direct = float(-np.sum(y * np.log(p) + (1 - y) * np.log(1 - p)) / 3)
    assert fit_term(LossSpec("bce"), p, y, z_out=z) == pytest.approx(direct, rel=1e-12)
    assert fit_term(LossSpec("bce"), p, y) == pytest.approx(direct, rel=1e-9)
    huge = np.array([[800.0], [-800.0]])
    val = fit_term(LossSpec("bce"), sigmoid(huge), np.array([[0.0], [1.0]]), z_out=huge)
    assert math.isfinite(val) and val == pytest.approx(800.0, rel=1e-12)


def test_loss_includes_l1_and_l2_terms():
    net = DenseNet((2, 2, 2), ("identity", "identity"))
    w1 = np.array([[1.0, 0.0], [0.0, 1.0]])
    w2 = np.array([[1.0, 0.0], [0.0, 1.0]])
    params = [[w1, np.zeros(2)], [w2, np.zeros(2)]]
    x = np.array([[1.0, -2.0], [3.0, 0.5]])
    y = np.zeros((2, 2))
    spec = LossSpec("mse", l1_weight=0.5, l1_layer=0, l2_weight=2.0)
    loss, _, aux = loss_and_grads(net, params, x, y, spec)
    b = 2
    mse = float(np.sum(x * x)) / (b * 2)
    l1 = 0.5 * float(np.sum(np.abs(x))) / b
    l2 = 2.0 * (float(np.sum(w1 * w1)) + float(np.sum(w2 * w2))) / (2.0 * b)
    assert loss == pytest.approx(mse + l1 + l2, rel=1e-14)
    assert aux["fit"] == pytest.approx(mse, rel=1e-14)
    assert aux["l1"] == pytest.approx(l1, rel=1e-14)


def test_bce_requires_sigmoid_output():
    net = DenseNet((2, 1), ("identity",))
    params = init_params(net, np.random.default_rng(0))
    with pytest.raises(ValueError, match="sigmoid"):
        loss_and_grads(net, params, np.ones((3, 2)), np.ones((3, 1)), LossSpec("bce"))


# ---------------------------------------------------------------------------
# gradients vs central differences


def _check(net, spec, n=6, seed=0, mask_rate=0.0):
    rng = np.random.default_rng(seed)
    params = init_params(net, rng)
    x = rng.normal(size=(n, net.dims[0]))
    if spec.kind == "bce":
        y = (rng.random((n, net.dims[-1])) < 0.5).astype(float)
    else:
        y = rng.normal(size=(n, net.dims[-1]))
    mask = dropout_mask(rng, x.shape, mask_rate) if mask_rate else None
    return gradient_check(net, params, x, y, spec, input_mask=mask)


def test_gradients_mse_deep_elu():
    net = DenseNet((4, 3, 2, 3, 4), ("elu", "elu", "elu", "identity"))
    assert _check(net, LossSpec("mse")) < 1e-7


def test_gradients_mse_with_l1_and_dropout():
    net = DenseNet((5, 3, 2, 3, 5), ("elu", "elu", "elu", "identity"))
    spec = LossSpec("mse", l1_weight=0.3, l1_layer=1)
    assert _check(net, spec, mask_rate=0.4, seed=7) < 1e-7


def test_gradients_mse_l1_on_output_layer():
    net = DenseNet((3, 2, 3), ("elu", "identity"))
    spec = LossSpec("mse", l1_weight=0.2, l1_layer=1)
    assert _check(net, spec, seed=11) < 1e-7


def test_gradients_bce_sigmoid_head_with_l2():
    net = DenseNet((3, 4, 1), ("relu", "sigmoid"))
    spec = LossSpec("bce", l2_weight=0.7)
    assert _check(net, spec, seed=5) < 1e-7


# ---------------------------------------------------------------------------
# clipping and Adam


def test_clip_global_norm_rescales_joint_norm():
    grads = [[np.array([[3.0]]), np.array([4.0])]]
    clipped, total = clip_global_norm(grads, 1.0)
    assert total == pytest.approx(5.0)
    joint = math.sqrt(float(np.sum(clipped[0][0] ** 2)) + float(np.sum(clipped[0][1] ** 2)))
    assert joint == pytest.approx(1.0, rel=1e-15)
    same, total2 = clip_global_norm(grads, 10.0)
    assert total2 == pytest.approx(5.0)
    np.testing.assert_array_equal(same[0][0], grads[0][0])


def test_adam_step_matches_hand_arithmetic():
    lr, b1, b2, eps = 0.1, 0.9, 0.999, 1e-8
    params = [[np.array([[1.0]]), np.array([2.0])]]
    state = AdamState.like(params)
    g1 = [[np.array([[0.5]]), np.array([-0.25])]]
    adam_step(params, g1, state, lr, b1, b2, eps)
    # first step: m-hat = g, v-hat = g^2, so the update is lr * g / (|g| + eps)
    assert params[0][0][0, 0] == pytest.approx(1.0 - lr * 0.5 / (0.5 + eps), rel=1e-15)
    assert params[0][1][0] == pytest.approx(2.0 - lr * (-0.25) / (0.25 + eps), rel=1e-15)
    assert state.t == 1
    # second step recomputed from the published moment recursions
    g2 = 0.1
    m = b1 * (1 - b1) * 0.5 + (1 - b1) * g2
    v = b2 * (1 - b2) * 0.25 + (1 - b2) * g2 * g2
    expected = params[0][0][0, 0] - lr * (m / (1 - b1**2)) / (math.sqrt(v / (1 - b2**2)) + eps)
    adam_step(params, [[np.array([[g2]]), np.array([0.0])]], state, lr, b1, b2, eps)
    assert params[0][0][0, 0] == pytest.approx(expected, rel=1e-15)
    assert state.t == 2


# ---------------------------------------------------------------------------
# training loop


def _linear_task(seed=0, n=200):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, 3))
    w_true = np.array([[1.0], [-2.0], [0.5]])
    y = x @ w_true
    return x[:150], y[:150], x[150:], y[150:]


def test_training_fits_a_linear_map():
    xt, yt, xv, yv = _linear_task()
    net = DenseNet((3, 1), ("identity",))
    params = init_params(net, np.random.default_rng(1))
    cfg = TrainConfig(learning_rate=0.05, batch_size=32, max_epochs=100, patience=20)
    best, history = train_dense_net(net, params, xt, yt, xv, yv, LossSpec("mse"), cfg, np.random.default_rng(2))
    assert history[-1]["val_fit"] < history[0]["val_fit"]
    out, _ = forward(net, best, xv)
    assert fit_term(LossSpec("mse"), out, yv) < 1e-3


def test_training_returns_best_epoch_parameters():
    xt, yt, xv, yv = _linear_task(seed=3)
    net = DenseNet((3, 2, 1), ("elu", "identity"))
    params = init_params(net, np.random.default_rng(4))
    cfg = TrainConfig(learning_rate=0.02, batch_size=64, max_epochs=12, patience=50)
    best, history = train_dense_net(net, params, xt, yt, xv, yv, LossSpec("mse"), cfg, np.random.default_rng(5))
    out, caches = forward(net, best, xv)
    refit = fit_term(LossSpec("mse"), out, yv, z_out=caches[-1][1])
    assert refit == min(h["val_fit"] for h in history)


@pytest.mark.filterwarnings("ignore:overflow", "ignore:invalid value")
def test_training_stops_after_patience_exhausted():
    xt, yt, xv, yv = _linear_task(seed=6)
    net = DenseNet((3, 1), ("identity",))
    params = init_params(net, np.random.default_rng(7))
    # absurd learning rate oscillates without improving: the loop must cut out early
    cfg = TrainConfig(learning_rate=5.0, batch_size=150, max_epochs=100, patience=3)
    try:
        _, history = train_dense_net(net, params, xt, yt, xv, yv, LossSpec("mse"), cfg, np.random.default_rng(8))
        assert len(history) < 100
    except TrainingDiverged:
        pass  # blowing up entirely is also an acceptable outcome at lr=5


def test_training_is_deterministic_given_seed():
    xt, yt, xv, yv = _linear_task(seed=9)
    net = DenseNet((3, 2, 1), ("elu", "identity"))
    cfg = TrainConfig(learning_rate=0.01, batch_size=32, max_epochs=5, patience=5, dropout_rate=0.2)
    runs = []
    for _ in range(2):
        params = init_params(net, np.random.default_rng(10))
        best, history = train_dense_net(net, params, xt, yt, xv, yv, LossSpec("mse"), cfg, np.random.default_rng(11))
        runs.append((best, history))
    assert runs[0][1] == runs[1][1]
    for (w0, b0), (w1, b1) in zip(runs[0][0], runs[1][0]):
        np.testing.assert_array_equal(w0, w1)
        np.testing.assert_array_equal(b0, b1)


@pytest.mark.filterwarnings("ignore:overflow", "ignore:invalid value")
def test_training_diverged_reports_position():
    xt, yt, xv, yv = _linear_task(seed=12)
    net = DenseNet((3, 1), ("identity",))
    params = [[np.full((3, 1), 1e150), np.zeros(1)]]
    with pytest.raises(TrainingDiverged, match="non-finite loss"):
        train_dense_net(
            net, params, xt * 1e160, yt, xv, yv, LossSpec("mse"),
            TrainConfig(learning_rate=1.0, batch_size=150, max_epochs=3, patience=3),
            np.random.default_rng(13),
        )


def test_copy_params_is_deep():
    params = [[np.ones((2, 2)), np.zeros(2)]]
    dup = copy_params(params)
    dup[0][0][0, 0] = 99.0
    assert params[0][0][0, 0] == 1.0
