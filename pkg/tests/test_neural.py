import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from credsynth.neural import (AdamState, DenseNet, Layer, adam_step, backward, bce_loss, mlp, mse_loss,
                              softmax_xent_loss)

from gradcheck import check, fd_grads, max_rel_error


def test_identity_layer():
    net = DenseNet([Layer(np.eye(3), np.zeros(3))])
    x = np.arange(6.0).reshape(2, 3)
    assert np.array_equal(net.forward(x), x)


def test_relu_negative_is_zero():
    net = DenseNet([Layer(np.eye(2), np.full(2, -10.0), "relu")])
    assert np.all(net.forward(np.ones((3, 2))) == 0.0)


def test_hand_computed_2x2():
    W1 = np.array([[1.0, -1.0], [2.0, 0.5]])
    b1 = np.array([0.5, 0.0])
    W2 = np.array([[1.0], [-2.0]])
    b2 = np.array([0.25])
    net = DenseNet([Layer(W1, b1, "relu"), Layer(W2, b2, "sigmoid")])
    x = np.array([[1.0, 1.0]])
    # hidden: relu([1 + 2 + 0.5, -1 + 0.5]) = [3.5, 0]; out: sigmoid(3.5 + 0.25)
    assert net.forward(x)[0, 0] == pytest.approx(1 / (1 + np.exp(-3.75)), abs=1e-15)


def test_residual_concatenates():
    net = DenseNet([Layer(np.ones((2, 1)), np.zeros(1), "identity", residual=True)])
    assert net.forward(np.array([[1.0, 2.0]])).tolist() == [[1.0, 2.0, 3.0]]


def test_softmax_spans_sum_to_one(rng):
    net = mlp(3, (4,), 5, rng, out_activation="softmax", out_spans=[(0, 2), (2, 5)])
    out = net.forward(rng.normal(size=(6, 3)))
    assert np.allclose(out[:, :2].sum(1), 1) and np.allclose(out[:, 2:].sum(1), 1)


def test_dimension_mismatch(rng):
    net = mlp(3, (4,), 2, rng)
    with pytest.raises(ValueError):
        net.forward(np.zeros((2, 4)))
    with pytest.raises(ValueError):
        DenseNet([Layer(np.zeros((2, 3)), np.zeros(3)), Layer(np.zeros((4, 1)), np.zeros(1))])


def test_zero_net_zero_gradient():
    net = DenseNet([Layer(np.zeros((3, 2)), np.zeros(2))])
    _, grads = backward(net, np.ones((4, 3)), mse_loss(np.zeros((4, 2))))
    assert all(np.all(g == 0) for g in grads)


def test_bce_at_perfect_fit_has_zero_bias_gradient():
    net = DenseNet([Layer(np.zeros((1, 1)), np.array([0.3]), "sigmoid")])
    p = 1 / (1 + np.exp(-0.3))
    _, grads = backward(net, np.ones((5, 1)), bce_loss(np.full((5, 1), p)))
    assert abs(grads[1][0]) < 1e-12


def test_loss_shape_mismatch(rng):
    net = mlp(2, (), 3, rng)
    with pytest.raises(ValueError):
        backward(net, np.zeros((4, 2)), lambda out: (0.0, np.zeros((4, 2))))


@settings(max_examples=25)
@given(st.integers(0, 10**6))
def test_gradients_match_finite_differences(seed):
    assert check(seed) < 1e-3


def test_gradcheck_on_softmax_head(rng):
    spans = [(0, 2), (2, 5)]
    net = mlp(3, (4, 3), 5, rng, hidden_activation="tanh", residual=True)
    t = np.zeros((4, 5))
    t[np.arange(4), [0, 1, 1, 0]] = 1
    t[np.arange(4), [2, 4, 3, 3]] = 1
    loss = softmax_xent_loss(t, spans)
    x = rng.normal(size=(4, 3))
    _, grads = backward(net, x, loss)
    assert max_rel_error(grads, fd_grads(net, x, loss)) < 1e-3


def test_adam_zero_gradient_is_noop(rng):
    net = mlp(2, (3,), 1, rng)
    before = [p.copy() for p in net.params()]
    st_ = AdamState.for_net(net)
    adam_step(net, [np.zeros_like(p) for p in net.params()], st_)
    assert st_.step == 1
    assert all(np.array_equal(a, b) for a, b in zip(before, net.params()))


def test_adam_moves_against_constant_gradient(rng):
    net = mlp(1, (), 1, rng)
    w0 = net.params()[0].copy()
    st_ = AdamState.for_net(net)
    for _ in range(20):
        adam_step(net, [np.ones_like(p) for p in net.params()], st_)
    assert np.all(net.params()[0] < w0)


def _scalar_adam(w, opt, steps, lr, b1=0.9, b2=0.999, eps=1e-8):
    m = v = 0.0
    for t in range(1, steps + 1):
        g = w - opt
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        w -= lr * (m / (1 - b1**t)) / ((v / (1 - b2**t)) ** 0.5 + eps)
    return w


def test_adam_scalar_quadratic():
    # loss 0.5 (w - 1)^2 -> gradient w - 1
    net = DenseNet([Layer(np.zeros((1, 1)), np.zeros(1))])
    st_ = AdamState.for_net(net, lr=0.01)
    for _ in range(500):
        w = net.params()[0]
        adam_step(net, [w - 1.0, np.zeros(1)], st_)
    w = net.params()[0][0, 0]
    assert w == pytest.approx(_scalar_adam(0.0, 1.0, 500, 0.01), abs=1e-12)
    assert abs(w - 1.0) < 1e-2


def test_adam_shape_mismatch(rng):
    net = mlp(2, (3,), 1, rng)
    with pytest.raises(ValueError):
        adam_step(net, [np.zeros(1)], AdamState.for_net(net))


def test_separable_toy_reaches_full_accuracy(rng):
    X = rng.normal(size=(200, 2))
    y = (X[:, 0] - 0.5 * X[:, 1] > 0).astype(float)[:, None]
    net = mlp(2, (8,), 1, rng, hidden_activation="tanh", out_activation="sigmoid")
    st_ = AdamState.for_net(net, lr=0.01)
    for _ in range(2000):
        _, g = backward(net, X, bce_loss(y))
        adam_step(net, g, st_)
        if np.all((net.forward(X) > 0.5) == (y > 0.5)):
            break
    assert np.all((net.forward(X) > 0.5) == (y > 0.5))
    assert all(np.all(np.isfinite(p)) for p in net.params())


def test_save_load_round_trip(tmp_path, rng):
    net = mlp(3, (4, 4), 2, rng, residual=True, out_activation="softmax", out_spans=[(0, 2)])
    net.save(tmp_path / "n.npz")
    back = DenseNet.load(tmp_path / "n.npz")
    x = rng.normal(size=(5, 3))
    assert np.array_equal(back.forward(x), net.forward(x))
    again = DenseNet.from_dict(net.to_dict())
    assert np.array_equal(again.forward(x), net.forward(x))


def test_version_check(rng):
    obj = mlp(1, (), 1, rng).to_dict()
    obj["version"] = 99
    with pytest.raises(ValueError):
        DenseNet.from_dict(obj)
