import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from iterskel.errors import ShapeError
from iterskel.topology import (
    _ALL, _BG_ADJ, _FACE, _FG_ADJ, _N18, BettiNumbers, ConnectivityPair, _count_components, betti,
    connected_components, is_simple, neighbourhood_mask,
)

from conftest import random_binary
from oracles import betti_2d, betti_3d, flood_count


def test_connectivity_pair():
    assert ConnectivityPair.for_ndim(2) == ConnectivityPair(8, 4)
    assert ConnectivityPair.for_ndim(3) == ConnectivityPair(26, 6)
    with pytest.raises(ValueError):
        ConnectivityPair(8, 6)


def test_diagonal_pixels():
    g = np.zeros((4, 4))
    g[1, 1] = g[2, 2] = 1
    assert connected_components(g, 8)[1] == 1
    assert connected_components(g, 4)[1] == 2


def test_components_empty_and_invalid():
    labels, count = connected_components(np.zeros((5, 5)), 8)
    assert count == 0 and not labels.any()
    with pytest.raises(ValueError):
        connected_components(np.zeros((5, 5)), 6)
    with pytest.raises(ValueError):
        connected_components(np.zeros((5, 5, 5)), 8)


def test_components_match_flood_fill(rng):
    for _ in range(20):
        g = random_binary(rng, (20, 20), 0.45)
        for adj in (4, 8):
            labels, count = connected_components(g, adj)
            assert count == flood_count(g, adj)
            assert set(np.unique(labels[g > 0])) == set(range(1, count + 1))
            assert not labels[g == 0].any()
    for _ in range(5):
        g = random_binary(rng, (7, 7, 7), 0.3)
        for adj in (6, 26):
            assert connected_components(g, adj)[1] == flood_count(g, adj)


def test_betti_small_shapes():
    px = np.zeros((5, 5))
    px[2, 2] = 1
    assert betti(px) == (1, 0, 0)
    ring = np.ones((5, 5))
    ring[1:4, 1:4] = 0
    assert betti(ring) == BettiNumbers(1, 1, 0)
    shell = np.ones((5, 5, 5))
    shell[1:4, 1:4, 1:4] = 0
    assert betti(shell) == (1, 0, 1)
    assert betti(np.zeros((4, 4))) == (0, 0, 0)
    assert betti(np.zeros((4, 4, 4))) == (0, 0, 0)


def test_betti_3d_torus():
    g = np.zeros((5, 5, 3))
    g[:, :, 1] = 1
    g[2, 2, 1] = 0
    assert betti(g) == (1, 1, 0)


def test_betti_2d_matches_complement_oracle(rng):
    for _ in range(200):
        g = random_binary(rng, (10, 10), rng.uniform(0.2, 0.8))
        b = betti(g)
        assert (b.b0, b.b1) == betti_2d(g) and b.b2 == 0


def test_betti_3d_matches_homology_oracle(rng):
    for _ in range(25):
        g = random_binary(rng, (5, 5, 5), rng.uniform(0.3, 0.8))
        assert tuple(betti(g)) == betti_3d(g)


def test_single_component_no_holes():
    g = np.zeros((12, 12))
    g[2:9, 3:7] = 1
    g[5, 7:11] = 1
    assert betti(g) == (1, 0, 0)


@settings(max_examples=40, deadline=None)
@given(
    arrays(np.uint8, (7, 6, 5), elements=st.integers(0, 1)),
    st.permutations([0, 1, 2]),
    st.lists(st.booleans(), min_size=3, max_size=3),
)
def test_betti_invariant_under_symmetries(g, perm, flips):
    h = np.transpose(g, perm)
    for ax, f in enumerate(flips):
        if f:
            h = np.flip(h, ax)
    assert betti(h) == betti(g)


def test_is_simple_examples():
    line = np.zeros((7, 7))
    line[3, 1:6] = 1
    assert is_simple(line, (3, 1))
    assert not is_simple(line, (3, 3))
    px = np.zeros((5, 5))
    px[2, 2] = 1
    assert not is_simple(px, (2, 2))
    with pytest.raises(ValueError):
        is_simple(px, (0, 0))
    with pytest.raises(ShapeError):
        is_simple(px, (0, 0, 0))


def test_is_simple_border_point():
    g = np.zeros((4, 4))
    g[0, :3] = 1
    assert is_simple(g, (0, 0))
    assert not is_simple(g, (0, 1))


def _agrees(g, oracle):
    ref = oracle(g)
    for p in map(tuple, np.argwhere(g > 0)):
        h = g.copy()
        h[p] = 0
        assert is_simple(g, p) == (oracle(h) == ref), (g, p)


def test_is_simple_vs_betti_oracle_2d(rng):
    for _ in range(150):
        _agrees(random_binary(rng, (8, 8), rng.uniform(0.3, 0.7)), betti_2d)


def test_is_simple_vs_betti_oracle_3d_small(rng):
    for _ in range(6):
        _agrees(random_binary(rng, (4, 4, 4), rng.uniform(0.3, 0.7)), betti_3d)


def test_simple_3d_deletion_preserves_betti(rng):
    # the converse fails in 3D: see test_betti_blind_non_simple_point
    for _ in range(30):
        g = random_binary(rng, (6, 6, 6), rng.uniform(0.3, 0.7))
        ref = betti(g)
        for p in map(tuple, np.argwhere(g > 0)):
            h = g.copy()
            h[p] = 0
            same = betti(h) == ref
            if is_simple(g, p):
                assert same
            elif same:
                mask = neighbourhood_mask(g, p)
                assert _count_components(mask, _FG_ADJ[3], _ALL[3]) >= 2
                assert _count_components(~mask & _N18, _BG_ADJ[3], _FACE[3]) >= 2


def test_betti_blind_non_simple_point():
    # Deleting (4, 1, 2) breaks one loop and closes another through the
    # background, so Betti numbers agree although the point is not simple.
    g = np.zeros((6, 6, 6))
    for q in [(3, 1, 1), (3, 2, 3), (4, 0, 2), (4, 1, 2), (4, 2, 1), (4, 3, 2), (5, 1, 2)]:
        g[q] = 1
    h = g.copy()
    h[4, 1, 2] = 0
    assert betti_3d(g) == betti_3d(h) == (1, 1, 0)
    assert not is_simple(g, (4, 1, 2))
    mask = neighbourhood_mask(g, (4, 1, 2))
    assert _count_components(mask, _FG_ADJ[3], _ALL[3]) == 2
