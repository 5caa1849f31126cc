"""Dense 2D/3D grids and the fixed 3-wide morphology operations.

A grid is a plain ``numpy.ndarray`` of ``float32`` values in ``[0, 1]``.
Binary grids hold only 0.0 and 1.0. Pixels outside the array are treated as
background by every operation here, so foreground touching the border erodes.

The pooling functions take an optional ``nd`` argument: when given, only the
trailing ``nd`` axes are spatial and any leading axes (batch, channel) are
left alone.
"""

import numpy as np
from scipy import ndimage

from iterskel.errors import ShapeError

DTYPE = np.float32


def as_grid(a, dtype=DTYPE):
    """Return ``a`` as a 2D or 3D array of ``dtype``."""
    g = np.asarray(a, dtype=dtype)
    if g.ndim not in (2, 3):
        raise ShapeError(f"grid must be 2D or 3D, got ndim={g.ndim}")
    return g


def is_binary(g):
    g = np.asarray(g)
    return bool(np.all((g == 0) | (g == 1)))


def _spatial(g, nd):
    nd = g.ndim if nd is None else nd
    if nd not in (2, 3) or g.ndim < nd:
        raise ShapeError(f"cannot pool {nd} spatial axes of an array with ndim={g.ndim}")
    if min(g.shape[-nd:]) < 3:
        raise ShapeError(f"every spatial extent must be >= 3, got {g.shape[-nd:]}")
    return nd


def _window(g, nd):
    return (1,) * (g.ndim - nd) + (3,) * nd


def erode(g, nd=None):
    """Min over each 3-wide window, i.e. ``1 - maxpool(1 - g)`` with background padding."""
    g = np.asarray(g)
    nd = _spatial(g, nd)
    return ndimage.minimum_filter(g, size=_window(g, nd), mode="constant", cval=0)


def dilate(g, nd=None):
    """Max over each 3-wide window with background padding."""
    g = np.asarray(g)
    nd = _spatial(g, nd)
    return ndimage.maximum_filter(g, size=_window(g, nd), mode="constant", cval=0)


def boundary(g, nd=None):
    """Foreground that does not survive two erosions: ``g - erode(erode(g))``."""
    g = np.asarray(g)
    return g - erode(erode(g, nd), nd)


def elementwise(a, b, op):
    """Per-element ``mul``, ``sub``, ``add`` or ``max`` of two equally shaped grids.

    ``sub`` is clamped to ``[0, 1]`` when both operands are binary.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch: {a.shape} vs {b.shape}")
    if op == "mul":
        return a * b
    if op == "add":
        return a + b
    if op == "max":
        return np.maximum(a, b)
    if op == "sub":
        out = a - b
        if is_binary(a) and is_binary(b):
            out = np.clip(out, 0, 1)
        return out
    raise ValueError(f"unknown elementwise op {op!r}")
