"""Digital topology on binary grids: components, Betti numbers, simple points.

Foreground and background use the dual adjacency pairs (8, 4) in 2D and
(26, 6) in 3D. Space outside the grid is background.
"""

import itertools
from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple

import numpy as np
from scipy import ndimage

from iterskel.errors import ShapeError

_ALLOWED = {2: (8, 4), 3: (26, 6)}


@dataclass(frozen=True)
class ConnectivityPair:
    fg: int
    bg: int

    def __post_init__(self):
        if (self.fg, self.bg) not in _ALLOWED.values():
            raise ValueError(f"adjacency pair ({self.fg}, {self.bg}) is not a dual pair")

    @classmethod
    def for_ndim(cls, ndim):
        return cls(*_ALLOWED[ndim])


class BettiNumbers(NamedTuple):
    b0: int
    b1: int
    b2: int = 0


def _structure(ndim, adjacency):
    rank = {(2, 4): 1, (2, 8): 2, (3, 6): 1, (3, 26): 3}.get((ndim, adjacency))
    if rank is None:
        raise ValueError(f"invalid adjacency {adjacency} for a {ndim}D grid")
    return ndimage.generate_binary_structure(ndim, rank)


def connected_components(g, adjacency):
    """Label foreground components; returns ``(labels, count)``.

    Labels are assigned in raster order of each component's first cell.
    """
    g = np.asarray(g)
    if g.ndim not in (2, 3):
        raise ShapeError(f"grid must be 2D or 3D, got ndim={g.ndim}")
    labels, count = ndimage.label(g > 0, structure=_structure(g.ndim, adjacency))
    return labels, int(count)


def euler_characteristic(g):
    """Euler characteristic of the union of closed unit cells spanned by foreground."""
    fg = np.pad(np.asarray(g) > 0, 1)
    nd = fg.ndim
    chi = 0
    # a k-face of the lattice is present when any cell sharing it is foreground;
    # a face spanning the axis set A is shared by the 2**(nd-|A|) cells around it
    for axes in itertools.chain.from_iterable(itertools.combinations(range(nd), k) for k in range(nd + 1)):
        free = [a for a in range(nd) if a not in axes]
        present = np.zeros(tuple(s - 1 for s in fg.shape), dtype=bool)
        for shift in itertools.product((0, 1), repeat=len(free)):
            sl = [slice(1, None)] * nd
            for a in axes:
                sl[a] = slice(1, None)
            for a, s in zip(free, shift):
                sl[a] = slice(s, s + fg.shape[a] - 1)
            present |= fg[tuple(sl)]
        chi += (-1) ** len(axes) * int(present.sum())
    return chi


def betti(g):
    """Betti numbers of a binary 2D or 3D grid.

    2D: components of the foreground and bounded components of the background.
    3D: the same plus one-dimensional holes from the Euler characteristic,
    ``b1 = b0 + b2 - chi``.
    """
    g = np.asarray(g) > 0
    if g.ndim not in (2, 3):
        raise ShapeError(f"grid must be 2D or 3D, got ndim={g.ndim}")
    fg_adj, bg_adj = _ALLOWED[g.ndim]
    _, b0 = connected_components(g, fg_adj)
    _, holes = connected_components(~np.pad(g, 1), bg_adj)
    holes -= 1
    if g.ndim == 2:
        return BettiNumbers(b0, holes, 0)
    b2 = holes
    return BettiNumbers(b0, b0 + b2 - euler_characteristic(g), b2)


# -- simple points -----------------------------------------------------------
#
# A neighbourhood is encoded as an int with one bit per neighbour, in raster
# order of the 3x3 (3x3x3) window with the centre skipped.


def _offsets(ndim):
    return [o for o in itertools.product((-1, 0, 1), repeat=ndim) if any(o)]


def _adjacency_masks(offsets, max_l1):
    masks = []
    for a in offsets:
        m = 0
        for j, b in enumerate(offsets):
            d = [abs(x - y) for x, y in zip(a, b)]
            if max(d) == 1 and sum(d) <= max_l1:
                m |= 1 << j
        masks.append(m)
    return masks


_OFFS = {nd: _offsets(nd) for nd in (2, 3)}
_FACE = {nd: sum(1 << j for j, o in enumerate(_OFFS[nd]) if sum(map(abs, o)) == 1) for nd in (2, 3)}
_FG_ADJ = {nd: _adjacency_masks(_OFFS[nd], nd) for nd in (2, 3)}
_BG_ADJ = {nd: _adjacency_masks(_OFFS[nd], 1) for nd in (2, 3)}
_ALL = {nd: (1 << len(_OFFS[nd])) - 1 for nd in (2, 3)}
# background components in 3D are taken inside the 18-neighbourhood
_N18 = sum(1 << j for j, o in enumerate(_OFFS[3]) if sum(map(abs, o)) <= 2)
_BG_DOMAIN = {2: _ALL[2], 3: _N18}


def _count_components(nodes, adj, seeds, limit=2):
    """Number of components of ``nodes`` touching ``seeds``, stopping at ``limit``."""
    count = 0
    while nodes & seeds and count < limit:
        low = nodes & seeds
        comp = frontier = low & -low
        while frontier:
            i = frontier.bit_length() - 1
            frontier &= ~(1 << i)
            new = adj[i] & nodes & ~comp
            comp |= new
            frontier |= new
        nodes &= ~comp
        count += 1
    return count


@lru_cache(maxsize=1 << 18)
def _simple_2d(mask):
    if _count_components(mask, _FG_ADJ[2], _ALL[2]) != 1:
        return False
    return _count_components(~mask & _ALL[2], _BG_ADJ[2], _FACE[2]) == 1


@lru_cache(maxsize=1 << 20)
def _simple_3d(mask):
    if _count_components(mask, _FG_ADJ[3], _ALL[3]) != 1:
        return False
    return _count_components(~mask & _N18, _BG_ADJ[3], _FACE[3]) == 1


def simple_from_mask(mask, ndim):
    """Simplicity test for a neighbourhood already encoded as a bit mask."""
    return _simple_2d(mask) if ndim == 2 else _simple_3d(mask)


def neighbourhood_mask(g, p):
    """Bit mask of foreground neighbours of ``p``; out-of-grid counts as background."""
    mask = 0
    for j, o in enumerate(_OFFS[g.ndim]):
        q = tuple(c + d for c, d in zip(p, o))
        if all(0 <= c < s for c, s in zip(q, g.shape)) and g[q] > 0:
            mask |= 1 << j
    return mask


def is_simple(g, p):
    """True iff deleting foreground point ``p`` leaves the topology unchanged."""
    g = np.asarray(g)
    p = tuple(int(c) for c in p)
    if g.ndim not in (2, 3) or len(p) != g.ndim:
        raise ShapeError("point dimensionality does not match the grid")
    if not all(0 <= c < s for c, s in zip(p, g.shape)) or not g[p] > 0:
        raise ValueError(f"point {p} is not a foreground point")
    return simple_from_mask(neighbourhood_mask(g, p), g.ndim)
