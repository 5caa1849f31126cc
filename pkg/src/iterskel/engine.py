"""Iterative learned thinning.

Each iteration peels the two outermost layers of the current image, lets the
network choose which of those boundary cells to delete from the skeleton,
and continues on the doubly eroded image::

    eroded   = erode(erode(I))
    boundary = I - eroded
    delta    = f(I, boundary, S) * boundary
    S        = S - delta
    I        = eroded
"""

import itertools
import math
import threading
import warnings
from dataclasses import dataclass, field

import numpy as np

from iterskel import autodiff as ad
from iterskel.errors import ShapeError
from iterskel.grid import erode, is_binary
from iterskel.net import _forward_batch, binarize_ste, forward_tape, layer_matrices, masked_layers, window_offsets


class IterationWarning(UserWarning):
    """The image was not fully eroded after the requested number of iterations."""


@dataclass
class Step:
    eroded: np.ndarray
    boundary: np.ndarray
    delta: np.ndarray
    skeleton_after: np.ndarray


@dataclass
class SkelTrace:
    steps: list = field(default_factory=list)
    N: int = 0
    complete: bool = True
    tau: float = None


def default_iterations(image):
    """``ceil(max distance transform / 2) + 1``; 1 for an empty grid."""
    from iterskel.metrics import edt_sq_windowed

    d2 = edt_sq_windowed(image)
    if d2.size == 0 or d2.max() == 0:
        return 1
    return int(math.ceil(math.sqrt(float(d2.max())) / 2.0)) + 1


def run_batch(params, images, N, threshold=0.5, record_trace=False):
    """Hard rollout over a batch ``(B, *spatial)`` of binary images.

    Returns ``(skeletons, steps, complete)``; ``steps`` is empty unless
    ``record_trace``.
    """
    nd = params.ndim
    I = np.asarray(images, dtype=params.dtype)
    if I.ndim != nd + 1:
        raise ShapeError(f"expected a batch of {nd}D grids, got ndim={I.ndim}")
    S = I.copy()
    steps = []
    for _ in range(N):
        eroded = erode(erode(I, nd), nd)
        bnd = I - eroded
        if not bnd.any():
            delta = np.zeros_like(I)
        else:
            prob = _forward_batch(params, np.stack([I, bnd, S], axis=-1))
            delta = (prob > threshold).astype(I.dtype) * bnd
        S = S - delta
        if record_trace:
            steps.append((eroded, bnd, delta, S))
        I = eroded
    return S, steps, not I.any()


UNTIL_EMPTY = -1

_local = threading.local()


def _workspace(padded, widths, dtype):
    """Per-thread ``(inside, offs, buffers)`` for one framed grid shape.

    Hidden-layer buffers are only written at non-frame cells and only read
    back at cells written in the same call, so they can be reused across
    runs without clearing; the frame stays zero. Only the latest shape is kept.
    """
    key = (padded, tuple(widths), np.dtype(dtype).str)
    cached = getattr(_local, "work", None)
    if cached is None or cached[0] != key:
        size = math.prod(padded)
        inside = np.zeros(padded, dtype=bool)
        inside[(slice(1, -1),) * len(padded)] = True
        buffers = [np.zeros((size, c), dtype=dtype) for c in widths]
        cached = _local.work = (key, inside.ravel(), window_offsets(padded), buffers)
    return cached[1:]


def _run_single(params, image, N, threshold, record_trace):
    """Hard rollout of one grid on flat index sets of the framed grid.

    ``N = UNTIL_EMPTY`` iterates until the image is used up, which gives the
    same skeleton as ``N = default_iterations(image)`` since later steps have
    an empty boundary.

    Erosion, boundary extraction and the network all work on the current
    foreground cells only, so the cost tracks the shape rather than the grid.
    """
    nd = params.ndim
    padded = tuple(n + 2 for n in image.shape)
    inner = (slice(1, -1),) * nd
    size = math.prod(padded)
    widths = [w.shape[0] for w in params.weights[:-1]]
    inside, offs, buffers = _workspace(padded, widths, params.dtype)
    fg = np.zeros(size, dtype=bool)
    fg.reshape(padded)[inner] = image > 0
    cells = np.flatnonzero(fg)
    S = fg.astype(params.dtype)
    # channels I, boundary, S and a zero pad (4-wide rows gather faster)
    x = np.zeros((size, 4), dtype=params.dtype)
    x[:, 0] = fg
    x[:, 2] = S
    mats = layer_matrices(params, x.shape[1])
    # cells the network can ever touch: the image grown by the receptive field
    domain = cells
    for _ in range(len(params.weights) - 1):
        reach = np.zeros(size, dtype=bool)
        reach[(domain[:, None] + offs).ravel()] = True
        domain = np.flatnonzero(reach & inside)
    steps = []

    def dense(flat):
        return flat.reshape(padded)[inner].copy()

    for _ in itertools.count() if N == UNTIL_EMPTY else range(N):
        if N == UNTIL_EMPTY and not len(cells):
            break
        once = cells[np.take(fg, cells[:, None] + offs).all(axis=1)]
        mark = np.zeros(size, dtype=bool)
        mark[once] = True
        twice = once[np.take(mark, once[:, None] + offs).all(axis=1)]
        kept = np.zeros(size, dtype=bool)
        kept[twice] = True
        bnd = cells[~kept[cells]]
        deleted = bnd[:0]
        if len(bnd):
            x[bnd, 1] = 1
            prob = masked_layers(params, x, bnd, offs, inside, buffers, domain, mats)
            deleted = bnd[prob > threshold]
            S[deleted] = 0
            x[deleted, 2] = 0
            x[bnd, :2] = 0
        if record_trace:
            b = np.zeros(size, dtype=params.dtype)
            b[bnd] = 1
            d = np.zeros(size, dtype=params.dtype)
            d[deleted] = 1
            steps.append(Step(dense(kept.astype(params.dtype)), dense(b), dense(d), dense(S)))
        fg, cells = kept, twice
    return dense(S), steps, len(cells) == 0


def run(params, image, N=None, record_trace=False, rng=None, tau=None, threshold=0.5):
    """Skeletonize one grid; returns the skeleton, or ``(skeleton, trace)`` when tracing.

    Non-binary inputs are binarized with a random threshold first. ``N=None``
    picks :func:`default_iterations` (without a trace the rollout simply
    stops once the image is used up, with the same result).
    """
    image = np.asarray(image, dtype=params.dtype)
    if image.ndim != params.ndim:
        raise ShapeError(f"{image.ndim}D grid given to a {params.ndim}D network")
    if not is_binary(image):
        image, tau = binarize_ste(image, rng=rng, tau=tau)
    if N is None:
        # the trace lists every step, so it needs the count up front
        N = default_iterations(image) if record_trace else UNTIL_EMPTY
    elif N < 1:
        raise ValueError("N must be >= 1")
    skel, steps, complete = _run_single(params, image, N, threshold, record_trace)
    if not complete:
        warnings.warn(f"image not exhausted after N={N} iterations", IterationWarning, stacklevel=2)
    if not record_trace:
        return skel
    return skel, SkelTrace(steps=steps, N=N, complete=complete, tau=tau)


def rollout_tape(tape, pvars, images, N, nd, tau=None):
    """Record a soft rollout and return the skeleton Var after every step.

    ``images`` is either a binary array ``(B, *spatial)`` (the image path is
    then constant) or a Var holding continuous values, which is binarized
    with the straight-through threshold ``tau`` and eroded on the tape.
    Deltas stay continuous. Skeleton Vars have shape ``(B, *spatial)``.
    """
    if isinstance(images, ad.Var):
        I = ad.ste(tape, images, tau if tau is not None else 0.5)
        traced = True
    else:
        I = ad.Var(np.asarray(images, dtype=pvars[0].value.dtype))
        traced = False
    S = I
    out = []
    for _ in range(N):
        if traced:
            eroded = ad.minpool(tape, ad.minpool(tape, I, nd), nd)
        else:
            eroded = ad.Var(erode(erode(I.value, nd), nd))
        bnd = ad.sub(tape, I, eroded)
        prob = forward_tape(tape, pvars, ad.stack(tape, I, bnd, S))
        delta = ad.mul(tape, prob, bnd)
        S = ad.sub(tape, S, delta)
        out.append(S)
        I = eroded
    return out
