import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from iterskel import autodiff as ad
from iterskel.losses import LossConfig, composite_loss, dice_loss, focal_loss, neighborhood_loss

from conftest import random_binary
from oracles import central_diff, window_sum


def bar(width, size=15):
    g = np.zeros((size, size))
    lo = size // 2 - width // 2
    g[lo : lo + width, 2:-2] = 1
    return g


def test_focal_hand_value():
    # 0.25 * 0.5**2 * ln 2
    val = focal_loss(np.full((4, 4), 0.5), np.ones((4, 4)))
    assert val == pytest.approx(0.25 * 0.25 * math.log(2))
    assert val == pytest.approx(0.0433, abs=5e-5)


def test_focal_reduces_to_bce(rng):
    p = rng.uniform(0.01, 0.99, (9, 9))
    t = random_binary(rng, (9, 9))
    bce = -np.mean(t * np.log(p) + (1 - t) * np.log(1 - p))
    assert focal_loss(p, t, gamma=0, alpha=1) == pytest.approx(bce, rel=1e-12)


def test_focal_perfect_prediction(rng):
    t = random_binary(rng, (8, 8))
    assert focal_loss(np.clip(t, 1e-12, 1 - 1e-12), t) <= 1e-6
    assert focal_loss(t, t) == 0


def test_dice_values():
    a = np.zeros((20, 20))
    b = np.zeros((20, 20))
    a[:5] = 1
    b[10:15] = 1
    assert dice_loss(a, b) == pytest.approx(1 - 1 / 201)
    assert dice_loss(a, a) == 0
    assert dice_loss(np.zeros((5, 5)), np.zeros((5, 5))) == 0


def test_neighborhood_matches_oracle(rng):
    p = rng.random((9, 10))
    t = random_binary(rng, (9, 10))
    for m in (3, 5):
        expect = np.abs(window_sum(p, m) - window_sum(t, m)).mean()
        assert neighborhood_loss(p, t, m) == pytest.approx(expect, rel=1e-12)


def test_neighborhood_shifted_line():
    t = np.zeros((9, 9))
    t[4, 1:8] = 1
    p = np.roll(t, 1, axis=0)
    diff = window_sum(p, 3) - window_sum(t, 3)
    assert neighborhood_loss(p, t) == pytest.approx(np.abs(diff).mean())
    assert neighborhood_loss(p, t) > 0


def test_neighborhood_rejects_even_m():
    with pytest.raises(ValueError):
        neighborhood_loss(np.zeros((4, 4)), np.zeros((4, 4)), 4)
    with pytest.raises(ValueError):
        LossConfig(neighborhood_m=2)


def test_thick_prediction_costs_more():
    target = bar(1)
    thick = neighborhood_loss(bar(3), target)
    assert thick > neighborhood_loss(target, target) == 0
    assert thick > 0


@given(st.integers(0, 2**31), st.sampled_from([(6, 7), (4, 5, 3)]))
def test_neighborhood_symmetric(seed, shape):
    rng = np.random.default_rng(seed)
    a, b = rng.random(shape), rng.random(shape)
    assert neighborhood_loss(a, b) == pytest.approx(neighborhood_loss(b, a))


@given(st.integers(0, 2**31), st.floats(0.1, 0.9))
def test_losses_zero_iff_equal(seed, p):
    rng = np.random.default_rng(seed)
    t = random_binary(rng, (10, 10), p)
    for fn in (focal_loss, dice_loss, neighborhood_loss):
        assert fn(t, t) == 0
    other = t.copy()
    other[rng.integers(10), rng.integers(10)] += 1
    other %= 2
    for fn in (focal_loss, dice_loss, neighborhood_loss):
        assert fn(other, t) > 0


def test_composite_is_weighted_sum(rng):
    p = rng.random((8, 8))
    t = random_binary(rng, (8, 8))
    lc = LossConfig(weights=(0.5, 2.0, 3.0))
    expect = 0.5 * focal_loss(p, t) + 2.0 * dice_loss(p, t) + 3.0 * neighborhood_loss(p, t)
    assert composite_loss(p, t, lc) == pytest.approx(expect)


@pytest.mark.parametrize("fwd,bwd,static", [
    (ad.focal_fwd, ad.focal_bwd, dict(gamma=2.0, alpha=0.25)),
    (ad.dice_fwd, ad.dice_bwd, dict(nd=2)),
    (ad.neighborhood_fwd, ad.neighborhood_bwd, dict(m=3, nd=2)),
])
def test_loss_gradients_match_fd(fwd, bwd, static):
    rng = np.random.default_rng(11)
    p = rng.uniform(0.05, 0.95, (2, 6, 6))
    t = random_binary(rng, (2, 6, 6)).astype(np.float64)
    _, ctx = fwd(p, t, **static)
    g = bwd(ctx, np.float64(1.0))[0].reshape(-1)
    fd = central_diff(lambda: float(fwd(p, t, **static)[0]), p, 1e-6)
    for i, v in fd.items():
        assert g[i] == pytest.approx(v, rel=1e-5, abs=1e-9)
