import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from iterskel import autodiff as ad
from iterskel.engine import rollout_tape
from iterskel.errors import ShapeError, StaleTapeError
from iterskel.losses import LossConfig, composite_tape
from iterskel.net import (
    STUDENT,
    TEACHER,
    NetParams,
    binarize_ste,
    conv_forward,
    forward,
    forward_masked,
    forward_tape,
    init_net,
    watch_params,
)

from conftest import random_binary
from oracles import central_diff, naive_conv


def zero_net(arch=STUDENT, ndim=2):
    net = init_net(arch, ndim)
    for a in net.arrays():
        a[...] = 0
    return net


def test_identity_kernel():
    x = np.random.default_rng(0).random((2, 6, 7)).astype(np.float32)
    w = np.zeros((1, 2, 3, 3), np.float32)
    w[0, 1, 1, 1] = 1
    out = conv_forward(x, w, np.zeros(1, np.float32))
    np.testing.assert_array_equal(out[0], x[1])


def test_impulse_response():
    x = np.zeros((1, 7, 7), np.float32)
    x[0, 3, 3] = 1
    out = conv_forward(x, np.ones((1, 1, 3, 3), np.float32), np.zeros(1, np.float32))
    expect = np.zeros((7, 7))
    expect[2:5, 2:5] = 1
    np.testing.assert_array_equal(out[0], expect)


@pytest.mark.parametrize("shape", [(8, 8), (4, 5, 6)])
def test_conv_matches_naive(shape):
    rng = np.random.default_rng(len(shape))
    nd = len(shape)
    x = rng.standard_normal((3,) + shape)
    w = rng.standard_normal((4, 3) + (3,) * nd)
    b = rng.standard_normal(4)
    np.testing.assert_allclose(conv_forward(x, w, b), naive_conv(x, w, b), atol=1e-6)


def test_zero_net_is_half():
    g = np.ones((9, 11), np.float32)
    out = forward(zero_net(), g, g, g)
    np.testing.assert_array_equal(out, np.full((9, 11), 0.5, np.float32))


def test_zero_net_bias_gradient():
    # d/db sum(sigmoid(0)) = 0.25 per pixel for the last bias; earlier layers see a dead relu
    net = zero_net()
    tape = ad.Tape()
    pv = watch_params(tape, net)
    x = np.random.default_rng(1).random((1, 10, 12, 3)).astype(np.float32)
    out = forward_tape(tape, pv, ad.Var(x))
    grads = tape.backward(out, np.ones_like(out.value))
    assert grads["b2"][0] == pytest.approx(0.25 * 120)
    assert not grads["b0"].any()


def test_constant_loss_has_zero_grad():
    net = init_net(STUDENT, 2, seed=3)
    tape = ad.Tape()
    pv = watch_params(tape, net)
    out = forward_tape(tape, pv, ad.Var(np.ones((1, 5, 5, 3), np.float32)))
    grads = tape.backward(out, np.zeros_like(out.value))
    assert all(not np.any(g) for g in grads.values() if g is not None)


def test_param_counts():
    assert init_net(TEACHER).n_params == 5233 < 20000
    assert init_net(STUDENT).n_params == 881 < 3000
    assert init_net(STUDENT, 3).n_params < 3000


def test_forward_is_resolution_agnostic():
    net = init_net(TEACHER, seed=2)
    for shape in [(32, 32), (257, 131), (3, 3)]:
        g = np.zeros(shape, np.float32)
        assert forward(net, g, g, g).shape == shape


def test_forward_deterministic():
    g = random_binary(np.random.default_rng(5), (20, 20))
    a = forward(init_net(seed=9), g, g, g)
    b = forward(init_net(seed=9), g, g, g)
    assert a.tobytes() == b.tobytes()


def test_forward_shape_errors():
    net = init_net()
    with pytest.raises(ShapeError):
        forward(net, np.zeros((4, 4)), np.zeros((4, 5)), np.zeros((4, 4)))
    with pytest.raises(ShapeError):
        forward(net, np.zeros(4), np.zeros(4), np.zeros(4))
    with pytest.raises(ShapeError):
        NetParams(2, [np.zeros((4, 3, 3, 3))], [np.zeros(4)])


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from([(12, 9), (5, 6, 7)]))
def test_masked_forward_agrees_with_dense(seed, shape):
    rng = np.random.default_rng(seed)
    net = init_net(TEACHER, len(shape), seed=seed)
    x = rng.random(shape + (3,)).astype(np.float32)
    mask = rng.random(shape) < 0.3
    dense = forward(net, x[..., 0], x[..., 1], x[..., 2])
    np.testing.assert_allclose(forward_masked(net, x, mask), dense[mask], atol=1e-5)


def _grad_check(net, x, loss_fn, rel=1e-4):
    """Compare tape gradients of ``loss_fn`` with central differences in float64."""
    tape = ad.Tape()
    pv = watch_params(tape, net)
    grads = tape.backward(loss_fn(tape, pv))

    def value():
        t = ad.Tape()
        return float(loss_fn(t, watch_params(t, net, requires_grad=False)).value)

    rng = np.random.default_rng(0)
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        for name, arr in ((f"w{i}", w), (f"b{i}", b)):
            idx = rng.choice(arr.size, size=min(arr.size, 12), replace=False)
            fd = central_diff(value, arr, 1e-5, idx)
            g = grads[name].reshape(-1)
            for j in idx:
                assert abs(g[j] - fd[j]) <= rel * max(abs(fd[j]), 1e-3), (name, j, g[j], fd[j])


def test_network_gradients_match_fd():
    net = init_net(STUDENT, 2, seed=4).copy(np.float64)
    for b in net.biases:
        b += 0.05
    rng = np.random.default_rng(4)
    x = rng.random((2, 8, 8, 3))
    target = random_binary(rng, (2, 8, 8)).astype(np.float64)
    lc = LossConfig()
    _grad_check(net, x, lambda t, pv: composite_tape(t, forward_tape(t, pv, ad.Var(x)), target, lc, 2))


def test_rollout_gradients_match_fd():
    net = init_net(STUDENT, 2, seed=6).copy(np.float64)
    rng = np.random.default_rng(6)
    for b in net.biases:
        b[...] = rng.uniform(-0.1, 0.1, b.shape)
    img = rng.random((1, 10, 10))
    target = random_binary(rng, (1, 10, 10)).astype(np.float64)
    lc = LossConfig()

    def loss(t, pv):
        S = rollout_tape(t, pv, ad.Var(img, requires_grad=True), 3, 2, tau=0.4)[-1]
        return composite_tape(t, S, target, lc, 2)

    _grad_check(net, img, loss)


def test_stale_tape():
    net = init_net(STUDENT, seed=1)
    tape = ad.Tape()
    out = forward_tape(tape, watch_params(tape, net), ad.Var(np.ones((1, 4, 4, 3), np.float32)))
    net.weights[0][0, 0, 0, 0] += 1
    with pytest.raises(StaleTapeError):
        tape.backward(out, np.ones_like(out.value))


def test_tape_single_use():
    net = init_net(STUDENT, seed=1)
    tape = ad.Tape()
    out = forward_tape(tape, watch_params(tape, net), ad.Var(np.ones((1, 4, 4, 3), np.float32)))
    tape.backward(out, np.ones_like(out.value))
    with pytest.raises(StaleTapeError):
        tape.backward(out, np.ones_like(out.value))


def test_binarize_keeps_binary(rng):
    g = random_binary(rng, (16, 16))
    for _ in range(20):
        np.testing.assert_array_equal(binarize_ste(g, rng)[0], g)


def test_binarize_frequency():
    rng = np.random.default_rng(2024)
    hits = sum(binarize_ste(np.full((4, 4), 0.7), rng)[0].all() for _ in range(10_000))
    assert abs(hits / 10_000 - 0.7) <= 0.02


def test_binarize_clamps():
    out, _ = binarize_ste(np.array([-3.0, 0.5, 7.0]), tau=0.5)
    np.testing.assert_array_equal(out, [0, 0, 1])


def test_binarize_element_granularity(rng):
    out, tau = binarize_ste(np.full((50, 50), 0.5), rng, granularity="element")
    assert tau.shape == (50, 50)
    assert 0 < out.mean() < 1


def test_ste_gradient_is_identity():
    tape = ad.Tape()
    x = tape.leaf(np.random.default_rng(0).random((5, 5)), name="x")
    y = ad.ste(tape, x, 0.5)
    grads = tape.backward(y)
    np.testing.assert_array_equal(grads["x"], np.ones((5, 5)))
