"""Layer, forward, loss and backward tests.

Hand-worked scalar cases pin the arithmetic; the whitened backward is also
compared against a plain textbook MLP when every whitener is the identity
matrix (applied explicitly, fast path off), where the two must agree exactly.
"""

import numpy as np
import pytest

from fisherflow.activations import ActivationKind, activation_apply, activation_v
from fisherflow.fisher import FisherState
from fisherflow.network import (
    MLPModel,
    backward,
    build_mlp,
    forward,
    l2_penalty,
    log_softmax_columns,
    softmax_columns,
    softmax_xent_l2,
)

LN10 = 2.302585092994046
SIG_V_AT_10 = 4.5395807735907655e-05  # sigma(10) * (1 - sigma(10))
CE_MARGIN_20 = 2.0611536900435727e-09  # log(1 + exp(-20))


# ---------------------------------------------------------------- activations


def test_activation_names():
    assert ActivationKind.from_name("relu") is ActivationKind.RELU
    assert ActivationKind.from_name("sigmoid") is ActivationKind.SIGMOID
    with pytest.raises(ValueError, match="unknown activation"):
        ActivationKind.from_name("tanh")


def test_sigmoid_values_and_sensitivity():
    z = np.array([0.0, 10.0, -10.0])
    s = activation_apply(ActivationKind.SIGMOID, z)
    assert s[0] == 0.5
    assert np.isclose(s[1], 1.0 - s[2], atol=1e-15)
    v = activation_v(ActivationKind.SIGMOID, z)
    assert v[0] == 0.25
    assert np.isclose(v[1], SIG_V_AT_10, rtol=1e-12)


def test_sigmoid_extreme_inputs_do_not_overflow():
    with np.errstate(over="raise"):
        s = activation_apply(ActivationKind.SIGMOID, np.array([-800.0, 800.0]))
    assert s[0] == 0.0 and s[1] == 1.0


def test_relu_apply_and_sensitivity():
    z = np.array([-1.0, 0.0, 2.0])
    assert np.array_equal(activation_apply(ActivationKind.RELU, z), [0.0, 0.0, 2.0])
    # derivative at exactly zero is pinned to 0
    assert np.array_equal(activation_v(ActivationKind.RELU, z), [0.0, 0.0, 1.0])


def test_identity_passthrough():
    z = np.array([[1.5, -2.0]])
    assert activation_apply(ActivationKind.IDENTITY, z) is z
    assert np.array_equal(activation_v(ActivationKind.IDENTITY, z), np.ones_like(z))


# ---------------------------------------------------------------- build


def test_build_mlp_shapes_and_defaults(rng):
    model = build_mlp([4, 7, 3], ActivationKind.RELU, 0.01, rng)
    assert [l.w.shape for l in model.layers] == [(7, 4), (3, 7)]
    assert all(np.array_equal(l.b, np.zeros(l.w.shape[0])) for l in model.layers)
    assert model.layers[0].act is ActivationKind.RELU
    assert model.layers[-1].act is ActivationKind.IDENTITY
    assert all(l.fisher.s_is_identity for l in model.layers)
    assert model.l2 == 0.01


def test_build_mlp_glorot_bounds(rng):
    model = build_mlp([10, 20], ActivationKind.RELU, 0.0, rng)
    limit = np.sqrt(6.0 / 30.0)
    assert np.abs(model.layers[0].w).max() <= limit
    assert model.layers[0].w.std() > 0


def test_build_mlp_dtype_and_frozen(rng):
    model = build_mlp([3, 3], ActivationKind.SIGMOID, 0.0, rng, dtype=np.float32, frozen=True)
    assert model.layers[0].w.dtype == np.float32
    assert all(l.fisher.frozen for l in model.layers)


def test_build_mlp_fisher_options(rng):
    model = build_mlp([3, 3], ActivationKind.RELU, 0.0, rng, fisher_options={"interval": 4, "ema": 0.5})
    assert model.layers[0].fisher.interval == 4
    assert model.layers[0].fisher.ema == 0.5


def test_build_mlp_rejects_bad_arch(rng):
    with pytest.raises(ValueError, match="at least an input and an output"):
        build_mlp([5], ActivationKind.RELU, 0.0, rng)
    with pytest.raises(ValueError, match="positive"):
        build_mlp([5, 0, 2], ActivationKind.RELU, 0.0, rng)


# ---------------------------------------------------------------- softmax


def test_softmax_columns_normalizes(rng):
    logits = rng.standard_normal((5, 9)) * 30
    p = softmax_columns(logits)
    assert np.allclose(p.sum(axis=0), 1.0, atol=1e-12)
    assert np.all(p >= 0)
    # shift invariance
    assert np.allclose(p, softmax_columns(logits + 100.0), atol=1e-12)


def test_log_softmax_matches_log_of_softmax(rng):
    logits = rng.standard_normal((4, 6))
    assert np.allclose(log_softmax_columns(logits), np.log(softmax_columns(logits)), atol=1e-12)


# ---------------------------------------------------------------- forward


def test_forward_single_scalar_layer(rng):
    model = build_mlp([1, 1], ActivationKind.RELU, 0.0, rng)
    model.layers[0].w = np.array([[2.0]])
    trace = forward(model, np.array([[3.0]]))
    assert trace.logits[0, 0] == 6.0
    assert trace.probs[0, 0] == 1.0
    assert len(trace.inputs) == len(trace.pre_acts) == 1


def test_forward_records_whitened_inputs(rng):
    model = build_mlp([2, 2], ActivationKind.RELU, 0.0, rng)
    model.layers[0].fisher = FisherState(s=2.0 * np.eye(2))
    x = rng.standard_normal((2, 3))
    trace = forward(model, x)
    assert np.array_equal(trace.whitened[0], 2.0 * x)
    assert np.allclose(trace.logits, model.layers[0].w @ (2.0 * x) + model.layers[0].b[:, None])


def test_forward_dimension_errors(rng):
    model = build_mlp([3, 2], ActivationKind.RELU, 0.0, rng)
    with pytest.raises(ValueError, match="expected a 2-d input batch"):
        forward(model, np.ones(3))
    with pytest.raises(ValueError, match="layer 0: input has 4 rows, expected 3"):
        forward(model, np.ones((4, 2)))


# ---------------------------------------------------------------- loss


def test_xent_uniform_logits_is_log_k(rng):
    model = build_mlp([2, 10], ActivationKind.RELU, 0.0, rng)
    logits = np.zeros((10, 4))
    loss, dlogits = softmax_xent_l2(logits, np.array([0, 3, 9, 5]), model)
    assert np.isclose(loss, LN10, rtol=1e-12)
    # gradient of the uniform case: (1/K - onehot) / B
    want = np.full((10, 4), 0.1 / 4)
    want[[0, 3, 9, 5], [0, 1, 2, 3]] -= 1.0 / 4
    assert np.allclose(dlogits, want, atol=1e-15)


def test_xent_large_margin_is_tiny_but_positive(rng):
    model = build_mlp([2, 2], ActivationKind.RELU, 0.0, rng)
    logits = np.array([[20.0], [0.0]])
    loss, _ = softmax_xent_l2(logits, np.array([0]), model)
    assert np.isclose(loss, CE_MARGIN_20, rtol=1e-9)


def test_xent_includes_l2_penalty(rng):
    model = build_mlp([2, 2], ActivationKind.RELU, 0.5, rng)
    model.layers[0].w = np.array([[1.0, 0.0], [0.0, 2.0]])
    loss, _ = softmax_xent_l2(np.zeros((2, 1)), np.array([1]), model)
    assert np.isclose(loss, np.log(2.0) + 0.25 * 5.0, rtol=1e-12)
    assert l2_penalty(model) == 0.25 * 5.0


def test_xent_gradient_columns_sum_to_zero(rng):
    model = build_mlp([2, 3], ActivationKind.RELU, 0.0, rng)
    logits = rng.standard_normal((3, 5))
    _, dlogits = softmax_xent_l2(logits, rng.integers(0, 3, 5), model)
    assert np.allclose(dlogits.sum(axis=0), 0.0, atol=1e-14)


def test_xent_finite_difference_on_logits(rng):
    model = build_mlp([2, 4], ActivationKind.RELU, 0.0, rng)
    logits = rng.standard_normal((4, 3))
    labels = np.array([1, 0, 3])
    _, dlogits = softmax_xent_l2(logits, labels, model)
    h = 1e-6
    for i in range(4):
        for j in range(3):
            bump = np.zeros_like(logits)
            bump[i, j] = h
            up, _ = softmax_xent_l2(logits + bump, labels, model)
            dn, _ = softmax_xent_l2(logits - bump, labels, model)
            assert np.isclose((up - dn) / (2 * h), dlogits[i, j], atol=1e-8)


def test_xent_input_validation(rng):
    model = build_mlp([2, 3], ActivationKind.RELU, 0.0, rng)
    with pytest.raises(ValueError, match="empty batch"):
        softmax_xent_l2(np.zeros((3, 0)), np.zeros(0, dtype=int), model)
    with pytest.raises(ValueError, match=r"label out of range \[0, 3\)"):
        softmax_xent_l2(np.zeros((3, 2)), np.array([0, 3]), model)
    with pytest.raises(ValueError, match="one integer per column"):
        softmax_xent_l2(np.zeros((3, 2)), np.array([0]), model)


# ---------------------------------------------------------------- backward


def test_backward_single_layer_hand_case(rng):
    # one linear layer, batch of one: dW = dlogits @ x^T, db = dlogits
    model = build_mlp([2, 2], ActivationKind.RELU, 0.0, rng)
    model.layers[0].w = np.zeros((2, 2))
    x = np.array([[1.0], [2.0]])
    trace = forward(model, x)
    loss, dlogits = softmax_xent_l2(trace.logits, np.array([0]), model)
    (dw, db), = backward(model, trace, dlogits)
    assert np.allclose(dw, dlogits @ x.T, atol=1e-15)
    assert np.allclose(db, dlogits[:, 0], atol=1e-15)
    assert np.allclose(dw, np.array([[-0.5, -1.0], [0.5, 1.0]]), atol=1e-12)


def test_backward_zero_input_leaves_only_l2(rng):
    model = build_mlp([3, 2], ActivationKind.RELU, 0.7, rng)
    x = np.zeros((3, 4))
    trace = forward(model, x)
    _, dlogits = softmax_xent_l2(trace.logits, np.array([0, 0, 0, 1]), model)
    (dw, db), = backward(model, trace, dlogits)
    assert np.array_equal(dw, 0.7 * model.layers[0].w)  # data term vanished
    assert not np.allclose(db, 0.0)  # bias gradient carries no l2


def test_backward_upstream_applies_whitener_transpose(rng):
    # two linear layers; layer 1 has a non-trivial S. The input-layer delta
    # must be S^T W^T dlogits (identity activation keeps it bare).
    model = build_mlp([2, 2, 2], ActivationKind.IDENTITY, 0.0, rng)
    s = np.array([[1.0, 0.5], [0.5, 2.0]])
    model.layers[1].fisher = FisherState(s=s)
    x = rng.standard_normal((2, 3))
    trace = forward(model, x)
    _, dlogits = softmax_xent_l2(trace.logits, np.array([0, 1, 0]), model)
    grads = backward(model, trace, dlogits)
    delta0 = s.T @ (model.layers[1].w.T @ dlogits)
    assert np.allclose(grads[0][0], delta0 @ trace.whitened[0].T, atol=1e-13)
    assert np.allclose(grads[0][1], delta0.sum(axis=1), atol=1e-13)


def textbook_mlp_grads(model: MLPModel, x: np.ndarray, labels: np.ndarray):
    """Independent plain-MLP backprop (no whitening anywhere)."""
    acts = [l.act for l in model.layers]
    xs, zs = [x], []
    for layer in model.layers:
        z = layer.w @ xs[-1] + layer.b[:, None]
        zs.append(z)
        xs.append(activation_apply(layer.act, z))
    logits = zs[-1]
    shifted = logits - logits.max(axis=0, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=0, keepdims=True))
    cols = np.arange(x.shape[1])
    delta = np.exp(log_probs)
    delta[labels, cols] -= 1.0
    delta /= x.shape[1]
    grads = [None] * len(model.layers)
    for k in range(len(model.layers) - 1, -1, -1):
        dw = delta @ xs[k].T
        if model.l2 != 0.0:
            dw = dw + model.l2 * model.layers[k].w
        grads[k] = (dw, delta.sum(axis=1))
        if k > 0:
            delta = (model.layers[k].w.T @ delta) * activation_v(acts[k - 1], zs[k - 1])
    return grads


def test_explicit_identity_whitener_matches_textbook_exactly(rng):
    # S = I applied as a real matrix multiply (fast path off) changes nothing:
    # multiplying by the identity is exact in floating point.
    for trial in range(5):
        widths = [3, 5, 4, 3]
        act = ActivationKind.RELU if trial % 2 == 0 else ActivationKind.SIGMOID
        model = build_mlp(widths, act, 0.01, rng)
        for layer in model.layers:
            layer.fisher = FisherState(s=np.eye(layer.w.shape[1]))
            assert not layer.fisher.s_is_identity
        x = rng.standard_normal((widths[0], 6))
        labels = rng.integers(0, widths[-1], 6)
        trace = forward(model, x)
        _, dlogits = softmax_xent_l2(trace.logits, labels, model)
        got = backward(model, trace, dlogits)
        want = textbook_mlp_grads(model, x, labels)
        for (gw, gb), (ww, wb) in zip(got, want):
            assert np.array_equal(gw, ww)
            assert np.array_equal(gb, wb)


def test_backward_ignores_whitener_gradient(rng):
    # The whitener is held constant: perturbing S after the forward pass must
    # not change the gradients computed from the recorded trace.
    model = build_mlp([2, 3, 2], ActivationKind.SIGMOID, 0.0, rng)
    s = np.array([[1.2, 0.1, 0.0], [0.1, 0.9, 0.2], [0.0, 0.2, 1.1]])
    model.layers[1].fisher = FisherState(s=s)
    x = rng.standard_normal((2, 4))
    trace = forward(model, x)
    _, dlogits = softmax_xent_l2(trace.logits, rng.integers(0, 2, 4), model)
    before = backward(model, trace, dlogits)
    model.layers[1].fisher.s = s + 10.0  # stale trace stays authoritative for dW
    after = backward(model, trace, dlogits)
    assert np.array_equal(before[1][0], after[1][0])  # dW above the change
    assert not np.array_equal(before[0][0], after[0][0])  # upstream S^T did move
