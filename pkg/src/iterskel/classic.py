"""Non-learned skeletonization baselines.

``boolean_thin`` deletes simple points one at a time and never changes the
topology; it also produces the training labels. ``morph_skel`` is the fast
min/max-pooling skeleton, which is thin but often disconnected.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from iterskel.grid import dilate, erode
from iterskel.topology import _OFFS, simple_from_mask

_DIRECTIONS = {
    2: ("N", "S", "E", "W"),
    3: ("-x", "+x", "-y", "+y", "-z", "+z"),
}
_DIR_OFFSET = {
    "N": (-1, 0), "S": (1, 0), "E": (0, 1), "W": (0, -1),
    "-x": (0, 0, -1), "+x": (0, 0, 1),
    "-y": (0, -1, 0), "+y": (0, 1, 0),
    "-z": (-1, 0, 0), "+z": (1, 0, 0),
}


@dataclass(frozen=True)
class ThinningPolicy:
    endpoint_rule: str = "curve"
    subiteration_order: tuple = field(default=None)

    def order(self, ndim):
        order = self.subiteration_order or _DIRECTIONS[ndim]
        if sorted(order) != sorted(_DIRECTIONS[ndim]):
            raise ValueError(f"subiteration order must permute {_DIRECTIONS[ndim]}")
        return tuple(order)

    def __post_init__(self):
        if self.endpoint_rule not in ("curve", "none"):
            raise ValueError(f"unknown endpoint rule {self.endpoint_rule!r}")


def _flat_offsets(shape, offsets):
    strides = np.cumprod((1,) + tuple(shape[::-1]))[:-1][::-1]
    return np.array([int(np.dot(o, strides)) for o in offsets], dtype=np.intp)


def boolean_thin(g, policy=None):
    """Topology-preserving sequential thinning to a curve skeleton.

    Each cycle visits the border directions in ``policy`` order. Within a
    direction, points whose neighbour on that side is background are
    collected, then deleted one by one in raster order if they are still
    simple at the moment of deletion. Points with exactly one foreground
    neighbour are kept when ``endpoint_rule == "curve"``. Stops after a cycle
    with no deletion.
    """
    policy = policy or ThinningPolicy()
    g = np.asarray(g)
    nd = g.ndim
    pad = np.pad(g > 0, 1).astype(np.uint8)
    flat = pad.reshape(-1)
    nbr = _flat_offsets(pad.shape, _OFFS[nd])
    weights = 1 << np.arange(len(nbr), dtype=np.int64)
    keep_ends = policy.endpoint_rule == "curve"
    inner = tuple(slice(1, -1) for _ in range(nd))

    changed = True
    while changed:
        changed = False
        for name in policy.order(nd):
            cand = np.zeros_like(pad, dtype=bool)
            fg = pad[inner] > 0
            facing = pad[tuple(slice(1 + d, s - 1 + d) for d, s in zip(_DIR_OFFSET[name], pad.shape))] == 0
            cand[inner] = fg & facing
            for idx in np.flatnonzero(cand):
                vals = flat[idx + nbr]
                if keep_ends and vals.sum() <= 1:
                    continue
                if simple_from_mask(int(vals @ weights), nd):
                    flat[idx] = 0
                    changed = True
    return pad[inner].astype(np.float32)


def morph_skel(g, iters=None):
    """Union of opening residues over successive erosions.

    ``iters`` defaults to the ceiling of the largest distance-transform value,
    which is enough to erode ``g`` away completely.
    """
    g = np.asarray(g, dtype=np.float32)
    if iters is None:
        from iterskel.metrics import edt

        iters = max(1, math.ceil(float(edt(g).max(initial=0.0))))
    if iters < 1:
        raise ValueError("iters must be >= 1")
    img = g
    skel = np.maximum(img - dilate(erode(img)), 0)
    for _ in range(iters):
        img = erode(img)
        delta = np.maximum(img - dilate(erode(img)), 0)
        skel = skel + np.maximum(delta - skel * delta, 0)
    return skel
