import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from modelzoo.nncore import (
    EVAL,
    TRAIN,
    BatchNorm,
    Conv2D,
    Dense,
    Dropout,
    Flatten,
    MaxPool2D,
    MissingHeadError,
    NetworkSpec,
    ReLU,
    ShapeError,
    StaleCacheError,
    backward,
    backward_mixed,
    forward,
    forward_mixed,
    grad_check,
    init_network,
    load_network,
    mlp,
    predict_proba,
    save_network,
    small_cnn,
    softmax_cross_entropy,
)


def tiny_cnn(bn=True):
    trunk = [Conv2D(3, 4), MaxPool2D(2), ReLU()]
    if bn:
        trunk.append(BatchNorm())
    trunk += [Flatten(), Dense(6), ReLU()]
    return NetworkSpec((2, 6, 6), tuple(trunk))


def randomize(net, rng, scale=0.3):
    for k, v in net.params.items():
        if k.endswith(".b") or k.endswith(".beta"):
            v[...] = scale * rng.standard_normal(v.shape)
        elif k.endswith(".gamma"):
            v[...] = 1 + scale * rng.standard_normal(v.shape)
    for k, v in net.buffers.items():
        v[...] = rng.random(v.shape) + (0.5 if k.endswith(".var") else -0.5)
    return net


# -- spec construction ------------------------------------------------------


def test_small_cnn_matches_reference_shape():
    spec = small_cnn()
    convs = [l for l in spec.trunk if isinstance(l, Conv2D)]
    assert len(convs) == 3
    assert all(c.kernel == 3 and c.filters == 80 for c in convs)
    assert spec.shapes()[-1] == (80 * 3 * 3,)
    net = init_network(spec, {0: 2}, seed=0)
    conv = lambda cin: 80 * cin * 9 + 80
    trunk = conv(1) + 2 * conv(80) + 3 * 2 * 80
    assert net.num_params() == trunk + 720 * 2 + 2


def test_every_conv_is_followed_by_pool_relu_bn():
    trunk = small_cnn().trunk
    for i, layer in enumerate(trunk):
        if isinstance(layer, Conv2D):
            assert [type(l) for l in trunk[i + 1 : i + 4]] == [MaxPool2D, ReLU, BatchNorm]


def test_incompatible_layers_name_the_pair():
    with pytest.raises(ShapeError, match=r"Conv2D.*index 1 cannot follow Dense.*index 0"):
        NetworkSpec((8,), (Dense(4), Conv2D(3, 2)))


def test_pool_larger_than_input_rejected():
    with pytest.raises(ShapeError, match="MaxPool2D"):
        NetworkSpec((1, 2, 2), (MaxPool2D(4), Flatten()))


def test_spec_round_trips_through_dict():
    spec = tiny_cnn()
    assert NetworkSpec.from_dict(spec.to_dict()) == spec


# -- initialisation ---------------------------------------------------------


def test_head_bias_zero_and_bn_identity():
    net = init_network(tiny_cnn(), {0: 3, 5: 2}, seed=1)
    assert np.array_equal(net.params["h0.b"], np.zeros(3))
    assert np.array_equal(net.params["h5.b"], np.zeros(2))
    assert net.params["h0.w"].shape[1] == 3
    assert np.all(net.params["t3.gamma"] == 1) and np.all(net.params["t3.beta"] == 0)
    assert all(np.all(v == 0) for k, v in net.params.items() if k.endswith(".b"))


def test_init_is_deterministic():
    a = init_network(tiny_cnn(), [0, 1], seed=7, num_classes=2)
    b = init_network(tiny_cnn(), [0, 1], seed=7, num_classes=2)
    c = init_network(tiny_cnn(), [0, 1], seed=8, num_classes=2)
    assert all(np.array_equal(a.params[k], b.params[k]) for k in a.params)
    assert not np.array_equal(a.params["t0.w"], c.params["t0.w"])


def test_kaiming_std_monte_carlo():
    # fan_in 8 -> std sqrt(2/8) = 0.5; 8 x 1250 = 10^4 draws
    net = init_network(NetworkSpec((8,), (Dense(1250),)), [0], seed=3, num_classes=2)
    w = net.params["t0.w"]
    assert w.size == 10_000
    assert abs(w.std() - 0.5) < 0.1 * 0.5


def test_init_needs_a_head():
    with pytest.raises(ValueError):
        init_network(tiny_cnn(), {}, seed=0)


# -- forward ----------------------------------------------------------------


def test_zero_weights_give_zero_logits():
    net = init_network(mlp(5, (4,)), [0], seed=0, num_classes=3)
    for v in net.params.values():
        v[...] = 0
    logits, _ = forward(net, 0, np.random.default_rng(0).standard_normal((6, 5)))
    assert np.array_equal(logits, np.zeros((6, 3)))


def test_hand_matrix_multiply():
    net = init_network(NetworkSpec((2,), ()), [0], seed=0, num_classes=2)
    net.params["h0.w"][...] = np.eye(2)
    logits, _ = forward(net, 0, np.array([[3.0, 4.0]]))
    assert np.array_equal(logits, [[3.0, 4.0]])


def test_eval_forward_is_pure():
    net = randomize(init_network(small_cnn((1, 12, 12), 4), [0], 0, num_classes=3), np.random.default_rng(0))
    x = np.random.default_rng(1).random((5, 1, 12, 12))
    a, _ = forward(net, 0, x, EVAL)
    b, _ = forward(net, 0, x, EVAL)
    assert np.array_equal(a, b)
    assert a.shape == (5, 3)


def test_train_mode_updates_running_stats_eval_does_not():
    net = init_network(tiny_cnn(), [0], 0, num_classes=2)
    x = np.random.default_rng(0).random((4, 2, 6, 6))
    forward(net, 0, x, EVAL)
    assert np.all(net.buffers["t3.mean"] == 0)
    forward(net, 0, x, TRAIN, np.random.default_rng(0))
    assert np.any(net.buffers["t3.mean"] != 0)


def test_unknown_head():
    net = init_network(mlp(3), [0], 0, num_classes=2)
    with pytest.raises(MissingHeadError):
        forward(net, 9, np.zeros((1, 3)))
    with pytest.raises(MissingHeadError):
        predict_proba(net, 9, np.zeros((1, 3)))


def test_mixed_batch_dispatches_rows_to_heads():
    net = init_network(mlp(4, (8,)), {0: 2, 1: 3}, 0)
    x = np.random.default_rng(0).standard_normal((5, 4))
    tids = np.array([1, 0, 1, 1, 0])
    logits, _ = forward_mixed(net, x, tids, EVAL)
    assert logits[0].shape == (2, 2) and logits[1].shape == (3, 3)
    assert np.allclose(logits[1], forward(net, 1, x[tids == 1])[0])


# -- loss -------------------------------------------------------------------


def test_cross_entropy_closed_forms():
    loss, d = softmax_cross_entropy(np.zeros((1, 2)), [0])
    assert loss == pytest.approx(math.log(2), abs=1e-12)
    assert np.allclose(d, [[-0.5, 0.5]])
    loss, d = softmax_cross_entropy(np.array([[1000.0, 0.0]]), [0])
    assert loss == pytest.approx(0.0, abs=1e-12) and np.all(np.isfinite(d))
    for k in (3, 7, 10):
        assert softmax_cross_entropy(np.full((4, k), 2.5), [0, 1, 2, 0])[0] == pytest.approx(math.log(k))


def test_label_out_of_range():
    with pytest.raises(IndexError):
        softmax_cross_entropy(np.zeros((2, 3)), [0, 3])


# -- backward ---------------------------------------------------------------


def test_zero_dlogits_zero_grads():
    net = init_network(tiny_cnn(), [0], 0, num_classes=2)
    logits, cache = forward(net, 0, np.random.default_rng(0).random((3, 2, 6, 6)), TRAIN, np.random.default_rng(1))
    grads = backward(net, cache, np.zeros_like(logits), 0)
    assert set(grads) == set(net.keys_for([0]))
    assert all(not np.any(g) for g in grads.values())
    assert all(grads[k].shape == net.params[k].shape for k in grads)


def test_head_bias_gradient_is_column_mean_of_softmax_residual():
    rng = np.random.default_rng(2)
    net = init_network(mlp(4, (5,)), [0], 0, num_classes=3)
    x, y = rng.standard_normal((8, 4)), rng.integers(0, 3, 8)
    logits, cache = forward(net, 0, x, TRAIN, rng)
    _, dlogits = softmax_cross_entropy(logits, y)
    grads = backward(net, cache, dlogits, 0)
    p = np.exp(logits - logits.max(1, keepdims=True))
    p /= p.sum(1, keepdims=True)
    resid = p - np.eye(3)[y]
    # dlogits already carries the 1/batch factor
    assert np.allclose(grads["h0.b"], resid.mean(axis=0), atol=1e-14)


def test_other_heads_get_no_gradient():
    net = init_network(mlp(4, (5,)), {0: 2, 1: 2}, 0)
    logits, cache = forward(net, 0, np.ones((2, 4)), TRAIN, np.random.default_rng(0))
    grads = backward(net, cache, np.ones_like(logits), 0)
    assert "h1.w" not in grads and "h1.b" not in grads


def test_stale_cache_rejected():
    net = init_network(mlp(4, (5,)), [0], 0, num_classes=2)
    x = np.ones((2, 4))
    logits, old = forward(net, 0, x, TRAIN, np.random.default_rng(0))
    forward(net, 0, x, TRAIN, np.random.default_rng(0))
    with pytest.raises(StaleCacheError):
        backward(net, old, logits, 0)
    logits, cache = forward(net, 0, x, TRAIN, np.random.default_rng(0))
    backward(net, cache, logits, 0)
    with pytest.raises(StaleCacheError):
        backward(net, cache, logits, 0)
    with pytest.raises(StaleCacheError):
        backward_mixed(net, None, {0: logits})


# -- gradient checks --------------------------------------------------------


def test_grad_check_dense():
    rng = np.random.default_rng(0)
    net = randomize(init_network(mlp(6, (10,)), [0], 1, num_classes=3), rng)
    assert grad_check(net, 0, rng.standard_normal((8, 6)), rng.integers(0, 3, 8)) < 1e-4


def test_grad_check_conv_pool_bn_dense():
    rng = np.random.default_rng(1)
    net = randomize(init_network(tiny_cnn(), [0], 2, num_classes=3), rng)
    assert grad_check(net, 0, rng.standard_normal((4, 2, 6, 6)), rng.integers(0, 3, 4)) < 1e-4


def test_grad_check_through_batch_statistics():
    # a BN placed directly on a conv output makes the conv bias gradient
    # exactly zero, which the relative-error floor cannot resolve; keep a
    # ReLU in between so every parameter has a real gradient
    rng = np.random.default_rng(4)
    net = randomize(init_network(tiny_cnn(), [0], 2, num_classes=2), rng)
    assert grad_check(net, 0, rng.standard_normal((6, 2, 6, 6)), rng.integers(0, 2, 6), bn_mode="batch") < 1e-4


def test_zero_input_bias_gradients_match_exactly():
    # purely linear stack: central differences are exact up to rounding
    net = init_network(NetworkSpec((3,), (Dense(4),)), [0], 0, num_classes=2)
    x, y = np.zeros((5, 3)), np.array([0, 1, 1, 0, 1])
    logits, cache = forward(net, 0, x, EVAL)
    _, d = softmax_cross_entropy(logits, y)
    grads = backward(net, cache, d, 0)
    eps = 1e-5
    for key in ("t0.b", "h0.b"):
        p = net.params[key]
        for j in range(p.size):
            old = p.flat[j]
            p.flat[j] = old + eps
            up = softmax_cross_entropy(forward(net, 0, x, EVAL)[0], y)[0]
            p.flat[j] = old - eps
            down = softmax_cross_entropy(forward(net, 0, x, EVAL)[0], y)[0]
            p.flat[j] = old
            assert abs((up - down) / (2 * eps) - grads[key].flat[j]) < 1e-8


def test_grad_check_leaves_parameters_untouched():
    rng = np.random.default_rng(0)
    net = init_network(mlp(3, (4,)), [0], 0, num_classes=2)
    before = {k: v.copy() for k, v in net.params.items()}
    grad_check(net, 0, rng.standard_normal((4, 3)), rng.integers(0, 2, 4))
    assert all(np.array_equal(before[k], net.params[k]) for k in before)


# -- predictions and checkpoints --------------------------------------------


def test_predict_proba_closed_form():
    net = init_network(NetworkSpec((2,), ()), [0], 0, num_classes=2)
    net.params["h0.w"][...] = np.eye(2)
    p = predict_proba(net, 0, np.array([[0.0, 0.0], [math.log(3), 0.0]]))
    assert np.allclose(p, [[0.5, 0.5], [0.75, 0.25]], atol=1e-15)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 20), st.floats(0.1, 50))
def test_predict_proba_rows_are_distributions(seed, n, scale):
    rng = np.random.default_rng(seed)
    net = randomize(init_network(mlp(4, (6,), dropout=0.3, batchnorm=True), [0], seed, num_classes=5), rng)
    p = predict_proba(net, 0, scale * rng.standard_normal((n, 4)))
    assert np.all(p >= 0) and np.all(p <= 1)
    assert np.allclose(p.sum(axis=1), 1, atol=1e-9)


def test_dropout_is_identity_in_eval_and_inverted_in_train():
    net = init_network(NetworkSpec((1000,), (Dropout(0.2),)), [0], 0, num_classes=1)
    x = np.ones((4, 1000))
    _, cache = forward(net, 0, x, TRAIN, np.random.default_rng(0))
    kept = cache.features
    assert set(np.unique(kept)) <= {0.0, 1.25}
    assert abs(kept.mean() - 1.0) < 0.05
    _, cache = forward(net, 0, x, EVAL)
    assert np.array_equal(cache.features, x)


def test_checkpoint_round_trip(tmp_path):
    rng = np.random.default_rng(5)
    net = randomize(init_network(tiny_cnn(), {0: 2, 3: 4}, 1), rng)
    path = tmp_path / "net.json"
    save_network(net, path)
    back = load_network(path)
    x = rng.standard_normal((7, 2, 6, 6))
    for t in (0, 3):
        assert np.max(np.abs(predict_proba(back, t, x) - predict_proba(net, t, x))) <= 1e-12
    assert back.head_classes == net.head_classes
