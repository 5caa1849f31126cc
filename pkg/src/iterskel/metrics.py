"""Evaluation metrics: overlap, connectivity, Betti errors and thickness."""

import math
from dataclasses import asdict, dataclass

import numpy as np

from iterskel.errors import ShapeError
from iterskel.topology import betti


def _pair(a, b):
    a = np.asarray(a) > 0
    b = np.asarray(b) > 0
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def dice(a, b):
    """``2|a & b| / (|a| + |b|)``; two empty masks score 1."""
    a, b = _pair(a, b)
    denom = int(a.sum()) + int(b.sum())
    if denom == 0:
        return 1.0
    return 2.0 * int((a & b).sum()) / denom


def cldice(pred, target, skeletonize=None):
    """Harmonic mean of topology precision and topology sensitivity.

    Both masks are skeletonized with ``boolean_thin`` unless another
    ``skeletonize`` callable is supplied. If either skeleton is empty the
    score is 0, except when both inputs are empty (score 1).
    """
    pred, target = _pair(pred, target)
    if not pred.any() and not target.any():
        return 1.0
    if skeletonize is None:
        from iterskel.classic import boolean_thin as skeletonize
    sp = np.asarray(skeletonize(pred.astype(np.float32))) > 0
    st = np.asarray(skeletonize(target.astype(np.float32))) > 0
    if not sp.any() or not st.any():
        return 0.0
    tprec = (sp & target).sum() / sp.sum()
    tsens = (st & pred).sum() / st.sum()
    if tprec + tsens == 0:
        return 0.0
    return float(2 * tprec * tsens / (tprec + tsens))


def betti_error(pred, target):
    pred, target = _pair(pred, target)
    bp, bt = betti(pred), betti(target)
    return abs(bp.b0 - bt.b0), abs(bp.b1 - bt.b1)


_INF = 1e20


def _dt1d(f):
    """Squared distance transform of a sampled function (lower envelope of parabolas)."""
    n = len(f)
    d = [0.0] * n
    v = [0] * n
    z = [0.0] * (n + 1)
    k = 0
    z[0], z[1] = -_INF, _INF
    for q in range(1, n):
        fq = f[q]
        while True:
            p = v[k]
            s = ((fq + q * q) - (f[p] + p * p)) / (2 * q - 2 * p)
            if s <= z[k]:
                k -= 1
            else:
                break
        k += 1
        v[k] = q
        z[k] = s
        z[k + 1] = _INF
    k = 0
    for q in range(n):
        while z[k + 1] < q:
            k += 1
        p = v[k]
        d[q] = (q - p) * (q - p) + f[p]
    return d


def edt(g):
    """Exact Euclidean distance from each foreground cell to the nearest background.

    Cells outside the grid count as background. Background cells map to 0.
    """
    g = np.asarray(g) > 0
    if g.ndim not in (2, 3):
        raise ShapeError(f"grid must be 2D or 3D, got ndim={g.ndim}")
    if not g.any():
        return np.zeros(g.shape, dtype=np.float64)
    sq = np.where(np.pad(g, 1), _INF, 0.0)
    for axis in range(sq.ndim):
        moved = np.moveaxis(sq, axis, -1)
        lines = moved.reshape(-1, moved.shape[-1])
        out = np.empty_like(lines)
        for i, line in enumerate(lines):
            if line.min() >= _INF:
                out[i] = line
            elif line.max() == 0.0:
                out[i] = 0.0
            else:
                out[i] = _dt1d(line.tolist())
        sq = np.moveaxis(out.reshape(moved.shape), -1, axis)
    inner = tuple(slice(1, -1) for _ in range(g.ndim))
    return np.sqrt(sq[inner])


def _run_lengths(bg, axis):
    """Distance along ``axis`` from each cell to the nearest ``bg`` cell (framed grid)."""
    n = bg.shape[axis]
    pos = np.arange(n).reshape((-1,) + (1,) * (bg.ndim - 1 - axis))
    left = np.maximum.accumulate(np.where(bg, pos, -n), axis=axis)
    right = np.flip(np.minimum.accumulate(np.flip(np.where(bg, pos, 2 * n), axis), axis=axis), axis)
    return np.minimum(pos - left, right - pos)


def edt_sq_windowed(g):
    """Squared EDT by separable passes over a bounded window.

    Same values as ``edt(g) ** 2``. Every foreground cell lies within
    ``R = max_p min_axis run(p)`` of its nearest background cell, so each
    pass only needs offsets up to ``R``; all work is whole-array numpy.
    """
    g = np.asarray(g) > 0
    if not g.any():
        return np.zeros(g.shape, dtype=np.float64)
    bg = ~np.pad(g, 1)
    runs = [_run_lengths(bg, a) for a in range(bg.ndim)]
    R = int(np.minimum.reduce(runs).max())
    sq = runs[-1].astype(np.float64) ** 2
    for axis in range(bg.ndim - 2, -1, -1):
        best = sq.copy()
        n = sq.shape[axis]
        for k in range(1, min(R, n - 1) + 1):
            lo = [slice(None)] * sq.ndim
            hi = [slice(None)] * sq.ndim
            lo[axis], hi[axis] = slice(0, n - k), slice(k, n)
            lo, hi = tuple(lo), tuple(hi)
            np.minimum(best[hi], sq[lo] + k * k, out=best[hi])
            np.minimum(best[lo], sq[hi] + k * k, out=best[lo])
        sq = best
    inner = tuple(slice(1, -1) for _ in range(g.ndim))
    return sq[inner]


def thickness(g):
    """``(average, 99th percentile)`` of distance-transform values over foreground.

    Returns ``(0.0, 0.0, True)`` for an empty grid, otherwise ``(avg, max99, False)``;
    the last element flags the empty case. The percentile is nearest-rank.
    """
    d = edt(g)
    vals = np.sort(d[np.asarray(g) > 0])
    if vals.size == 0:
        return 0.0, 0.0, True
    rank = math.ceil(0.99 * vals.size)
    return float(vals.mean()), float(vals[rank - 1]), False


@dataclass
class Report:
    sample_id: str
    dice: float
    cldice: float
    b0_err: float
    b1_err: float
    avg_thickness: float
    max99_thickness: float
    runtime_ms: float = 0.0
    empty: bool = False

    COLUMNS = ("sample_id", "dice", "cldice", "b0_err", "b1_err", "avg_thickness", "max99_thickness", "runtime_ms")

    def row(self):
        d = asdict(self)
        return [d[c] for c in self.COLUMNS]


def evaluate(pred, target, sample_id="", runtime_ms=0.0, with_cldice=True):
    b0, b1 = betti_error(pred, target)
    avg, mx, empty = thickness(pred)
    return Report(
        sample_id=str(sample_id),
        dice=dice(pred, target),
        cldice=cldice(pred, target) if with_cldice else float("nan"),
        b0_err=float(b0),
        b1_err=float(b1),
        avg_thickness=avg,
        max99_thickness=mx,
        runtime_ms=float(runtime_ms),
        empty=empty,
    )


def summarize(reports):
    """Arithmetic mean of every numeric column."""
    if not reports:
        return {}
    cols = Report.COLUMNS[1:]
    return {c: float(np.mean([getattr(r, c) for r in reports])) for c in cols}
