import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from iterskel.engine import IterationWarning, default_iterations, run, run_batch
from iterskel.grid import erode
from iterskel.metrics import edt, edt_sq_windowed
from iterskel.net import STUDENT, TEACHER, init_net

from conftest import random_binary


def disk(radius, size=None):
    size = size or 2 * radius + 5
    c = size // 2
    y, x = np.mgrid[:size, :size]
    # open disk: max distance to background is exactly radius
    return (((y - c) ** 2 + (x - c) ** 2) < radius**2).astype(np.float32)


def forced(prob, arch=STUDENT, ndim=2):
    """A network whose output is the constant ``prob`` (via the last bias)."""
    net = init_net(arch, ndim)
    for a in net.arrays():
        a[...] = 0
    net.biases[-1][0] = np.log(prob / (1 - prob))
    return net


def test_default_iterations():
    assert default_iterations(np.zeros((8, 8))) == 1
    line = np.zeros((9, 9), np.float32)
    line[4, 1:8] = 1
    assert default_iterations(line) == 2
    d = disk(6)
    assert edt(d).max() == 6.0
    assert default_iterations(d) == 4


def test_empty_input():
    net = init_net(seed=0)
    skel, trace = run(net, np.zeros((10, 10)), record_trace=True)
    assert not skel.any()
    assert all(not s.delta.any() and not s.boundary.any() for s in trace.steps)


def test_zero_output_keeps_image(rng):
    g = random_binary(rng, (20, 20), 0.6)
    skel = run(forced(1e-4), g)
    np.testing.assert_array_equal(skel, g)


def test_full_deletion_empties_image(rng):
    g = random_binary(rng, (20, 20), 0.6)
    assert not run(forced(1 - 1e-4), g).any()


@pytest.mark.parametrize("seed", range(5))
def test_image_exhausted_after_default_iterations(seed):
    g = random_binary(np.random.default_rng(seed), (24, 24), 0.8)
    N = default_iterations(g)
    I = g
    for _ in range(N):
        I = erode(erode(I))
    assert not I.any()
    _, trace = run(init_net(seed=seed), g, record_trace=True)
    assert trace.complete and trace.N == N


def test_too_few_iterations_warns():
    with pytest.warns(IterationWarning):
        run(init_net(), disk(6), N=1)


def test_invalid_n():
    with pytest.raises(ValueError):
        run(init_net(), disk(3), N=0)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31), st.sampled_from([(17, 13), (7, 8, 6)]), st.floats(0.3, 0.9))
def test_trace_invariants(seed, shape, p):
    rng = np.random.default_rng(seed)
    g = random_binary(rng, shape, p)
    net = init_net(TEACHER, len(shape), seed=seed % 1000)
    skel, trace = run(net, g, record_trace=True)
    prev = g
    I = g
    for s in trace.steps:
        assert np.all(s.skeleton_after <= prev)
        assert s.skeleton_after.sum() <= prev.sum()
        np.testing.assert_array_equal(s.eroded, erode(erode(I)))
        np.testing.assert_array_equal(s.boundary, I - s.eroded)
        assert np.all(s.delta <= s.boundary)
        prev, I = s.skeleton_after, s.eroded
    np.testing.assert_array_equal(skel, prev)
    assert np.all(skel <= g)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31), st.sampled_from([(19, 23), (8, 9, 7)]))
def test_sparse_run_matches_dense_batch(seed, shape):
    rng = np.random.default_rng(seed)
    g = random_binary(rng, shape, 0.7)
    net = init_net(TEACHER, len(shape), seed=seed % 997)
    N = default_iterations(g)
    dense, _, _ = run_batch(net, g[None], N)
    np.testing.assert_array_equal(run(net, g, N=N), dense[0])
    np.testing.assert_array_equal(run(net, g), dense[0])


def test_reused_workspace_leaves_no_trace(rng):
    net = init_net(STUDENT, seed=3)
    full = np.ones((20, 20), np.float32)
    sparse = random_binary(rng, (20, 20), 0.4)
    other = random_binary(rng, (11, 17), 0.6)
    expect = {id(g): run_batch(net, g[None], default_iterations(g))[0][0] for g in (full, sparse, other)}
    # a dense grid fills the buffers, then shapes alternate
    for g in (full, sparse, other, sparse, full, other):
        np.testing.assert_array_equal(run(net, g), expect[id(g)])


def test_continuous_input_is_binarized():
    g = np.full((12, 12), 0.7, np.float32)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", IterationWarning)
        skel, trace = run(forced(1e-4), g, record_trace=True, tau=0.5)
    assert trace.tau == 0.5
    np.testing.assert_array_equal(skel, np.ones((12, 12)))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31), st.sampled_from([(1, 30), (31, 17), (6, 7, 9)]), st.floats(0.05, 0.97))
def test_windowed_edt_is_exact(seed, shape, p):
    g = random_binary(np.random.default_rng(seed), shape, p)
    np.testing.assert_allclose(np.sqrt(edt_sq_windowed(g)), edt(g), atol=1e-12)
