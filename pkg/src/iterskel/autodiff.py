"""A small reverse-mode tape over the fixed operation set.

Supported operations: 2D/3D stride-1 convolution, ReLU, sigmoid, min/max
pooling with a 3-wide window, elementwise add/sub/mul, the straight-through
threshold, channel stack/squeeze and the three training losses. Arrays are
batched channels-last as ``(batch, *spatial, channel)``; single-channel grids
drop the channel axis.

Every op is a pair ``fwd(*values, **static) -> (value, ctx)`` and
``bwd(ctx, grad) -> parent grads``. The tape stores both, so a forward pass
can be replayed from the leaves and backward visits each node once in
reverse recording order.
"""

import itertools

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import ndimage

from iterskel.errors import ShapeError, StaleTapeError


class Var:
    __slots__ = ("value", "grad", "requires_grad", "node")

    def __init__(self, value, requires_grad=False, node=None):
        self.value = value
        self.grad = None
        self.requires_grad = requires_grad
        self.node = node

    @property
    def shape(self):
        return self.value.shape


class _Node:
    __slots__ = ("fwd", "bwd", "parents", "static", "ctx", "out")

    def __init__(self, fwd, bwd, parents, static, ctx, out):
        self.fwd, self.bwd, self.parents, self.static = fwd, bwd, parents, static
        self.ctx, self.out = ctx, out


class Tape:
    def __init__(self):
        self.nodes = []
        self.leaves = {}
        self._snapshots = []
        self.done = False

    def leaf(self, value, name=None, requires_grad=True, watch=False):
        """Register an input. ``watch=True`` marks it as a parameter that must not change."""
        v = Var(value, requires_grad=requires_grad)
        if name is not None:
            self.leaves[name] = v
        if watch:
            self._snapshots.append((value, value.copy()))
        return v

    def apply(self, fwd, bwd, *parents, **static):
        vals = [p.value for p in parents]
        value, ctx = fwd(*vals, **static)
        if not any(p.requires_grad for p in parents):
            return Var(value)
        out = Var(value, requires_grad=True)
        node = _Node(fwd, bwd, parents, static, ctx, out)
        out.node = node
        self.nodes.append(node)
        return out

    def check_fresh(self):
        for live, snap in self._snapshots:
            if live.shape != snap.shape or not np.array_equal(live, snap):
                raise StaleTapeError("parameters changed since the tape was recorded")

    def replay(self):
        """Recompute every recorded value from the current leaf values."""
        for node in self.nodes:
            node.out.value, node.ctx = node.fwd(*(p.value for p in node.parents), **node.static)

    def backward(self, out, grad=None):
        """Accumulate ``d out / d leaf`` into ``leaf.grad`` for every leaf."""
        if self.done:
            raise StaleTapeError("tape already consumed by a backward pass")
        self.check_fresh()
        if grad is None:
            grad = np.ones_like(out.value)
        out.grad = np.asarray(grad, dtype=out.value.dtype)
        for node in reversed(self.nodes):
            g = node.out.grad
            if g is None:
                continue
            grads = node.bwd(node.ctx, g)
            for p, pg in zip(node.parents, grads):
                if pg is None or not p.requires_grad:
                    continue
                p.grad = pg if p.grad is None else p.grad + pg
            node.out.grad = None if node.out is not out else node.out.grad
            node.ctx = None
        self.done = True
        return {name: v.grad for name, v in self.leaves.items()}


# -- convolution ---------------------------------------------------------------


def _im2col(x):
    """(B, *S, C) input -> (B * prod(S), C * 3**nd) rows of the zero-padded input.

    Columns are ordered (channel, kz, ky, kx) to match the weight layout.
    """
    nd = x.ndim - 2
    xp = np.pad(x, [(0, 0)] + [(1, 1)] * nd + [(0, 0)])
    win = sliding_window_view(xp, (3,) * nd, axis=tuple(range(1, 1 + nd)))
    return win.reshape(-1, x.shape[-1] * 3**nd)


def conv_fwd(x, w, b):
    """Stride-1 cross-correlation with zero padding; ``x`` is (B, *S, C)."""
    if w.shape[1] != x.shape[-1]:
        raise ShapeError(f"conv expects {w.shape[1]} input channels, got {x.shape[-1]}")
    if min(x.shape[1:-1]) < 3:
        raise ShapeError("spatial extents must be >= 3")
    cols = _im2col(x)
    w2 = w.reshape(w.shape[0], -1)
    out = cols @ w2.T
    out += b
    return out.reshape(x.shape[:-1] + (w.shape[0],)), (cols, w, x.shape)


def conv_bwd(ctx, g):
    cols, w, xshape = ctx
    nd = len(xshape) - 2
    cout = w.shape[0]
    g2 = g.reshape(-1, cout)
    gw = (g2.T @ cols).reshape(w.shape)
    gb = g2.sum(axis=0)
    spatial = xshape[1:-1]
    gcols = (g2 @ w.reshape(cout, -1)).reshape(xshape + (3,) * nd)
    gxp = np.zeros((xshape[0],) + tuple(s + 2 for s in spatial) + (xshape[-1],), dtype=g.dtype)
    for k in itertools.product(range(3), repeat=nd):
        sl = (slice(None),) + tuple(slice(o, o + s) for o, s in zip(k, spatial))
        gxp[sl] += gcols[(Ellipsis,) + k]
    inner = (slice(None),) + tuple(slice(1, -1) for _ in range(nd))
    return gxp[inner], gw, gb


# -- activations -----------------------------------------------------------------


def relu_fwd(x):
    mask = x > 0
    return x * mask, mask


def relu_bwd(mask, g):
    return (g * mask,)


def sigmoid_fwd(x):
    out = 0.5 * (1.0 + np.tanh(0.5 * x))
    return out, out


def sigmoid_bwd(out, g):
    return (g * out * (1.0 - out),)


# -- pooling -----------------------------------------------------------------------


def _pool(x, nd, pick):
    xp = np.pad(x, [(0, 0)] * (x.ndim - nd) + [(1, 1)] * nd)
    axes = tuple(range(x.ndim - nd, x.ndim))
    win = sliding_window_view(xp, (3,) * nd, axis=axes)
    win = win.reshape(win.shape[: x.ndim] + (-1,))
    idx = pick(win, axis=-1)
    val = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]
    return val, (idx, xp.shape, nd)


def _pool_bwd(ctx, g):
    idx, pshape, nd = ctx
    lead = len(pshape) - nd
    spatial = g.shape[lead:]
    gp = np.zeros(pshape, dtype=g.dtype)
    for k, off in enumerate(itertools.product(range(3), repeat=nd)):
        sl = (slice(None),) * lead + tuple(slice(o, o + s) for o, s in zip(off, spatial))
        gp[sl] += np.where(idx == k, g, 0)
    inner = (slice(None),) * lead + tuple(slice(1, -1) for _ in range(nd))
    return (gp[inner],)


def maxpool_fwd(x, nd):
    """3-wide max pooling, background (0) padding, first-scanned argmax."""
    return _pool(x, nd, np.argmax)


def minpool_fwd(x, nd):
    """3-wide min pooling, i.e. ``1 - maxpool(1 - x)`` with the complement padded by 1."""
    return _pool(x, nd, np.argmin)


# -- elementwise -------------------------------------------------------------------


def _same(a, b):
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch: {a.shape} vs {b.shape}")


def add_fwd(a, b):
    _same(a, b)
    return a + b, None


def add_bwd(ctx, g):
    return g, g


def sub_fwd(a, b):
    _same(a, b)
    return a - b, None


def sub_bwd(ctx, g):
    return g, -g


def mul_fwd(a, b):
    _same(a, b)
    return a * b, (a, b)


def mul_bwd(ctx, g):
    a, b = ctx
    return g * b, g * a


def stack_fwd(*xs):
    """Stack single-channel grids into a channels-last array."""
    return np.stack(xs, axis=-1), len(xs)


def stack_bwd(n, g):
    return tuple(g[..., i] for i in range(n))


def squeeze_fwd(x):
    return x[..., 0], None


def squeeze_bwd(ctx, g):
    return (g[..., None],)


def ste_fwd(x, tau):
    """Hard threshold ``clip(x) > tau``; ``tau`` broadcasts against ``x``."""
    return (np.clip(x, 0, 1) > tau).astype(x.dtype), None


def ste_bwd(ctx, g):
    return (g,)


def lincomb_fwd(*xs, coeffs):
    return sum(c * x for c, x in zip(coeffs, xs)), coeffs


def lincomb_bwd(coeffs, g):
    return tuple(c * g for c in coeffs)


# -- losses (scalar outputs, mean over the batch) -----------------------------------

LOG_CLAMP = 1e-12


def focal_fwd(p, t, gamma, alpha):
    _same(p, t)
    pt = np.where(t > 0.5, p, 1.0 - p)
    ptc = np.maximum(pt, LOG_CLAMP)
    logpt = np.log(ptc)
    q = np.clip(1.0 - pt, 0.0, None)
    loss = -alpha * q**gamma * logpt
    return np.asarray(loss.mean(), dtype=p.dtype), (p, t, pt, q, logpt, gamma, alpha)


def focal_bwd(ctx, g):
    p, t, pt, q, logpt, gamma, alpha = ctx
    dlog = np.where(pt > LOG_CLAMP, 1.0 / np.maximum(pt, LOG_CLAMP), 0.0)
    dpt = -alpha * q**gamma * dlog
    if gamma != 0:
        safe = np.where(q > 0, q, 1.0)
        dpt = dpt + np.where(q > 0, alpha * gamma * safe ** (gamma - 1) * logpt, 0.0)
    sign = np.where(t > 0.5, 1.0, -1.0)
    return ((g * dpt * sign / p.size).astype(p.dtype), None)


def dice_fwd(p, t, nd, eps=1.0):
    """Dice loss per grid over the trailing ``nd`` axes, averaged over the rest."""
    _same(p, t)
    axes = tuple(range(p.ndim - nd, p.ndim))
    inter = (p * t).sum(axis=axes, keepdims=True)
    union = p.sum(axis=axes, keepdims=True) + t.sum(axis=axes, keepdims=True)
    per = 1.0 - (2.0 * inter + eps) / (union + eps)
    return np.asarray(per.mean(), dtype=p.dtype), (t, inter, union, eps, per.size)


def dice_bwd(ctx, g):
    t, inter, union, eps, count = ctx
    num = 2.0 * inter + eps
    den = union + eps
    d = -(2.0 * t * den - num) / den**2
    return ((g * d / count).astype(t.dtype), None)


def box_sum(x, m, nd):
    """Correlate the trailing ``nd`` axes with an all-ones ``m``-wide kernel, zero padded."""
    kernel = np.ones((1,) * (x.ndim - nd) + (m,) * nd, dtype=x.dtype)
    return ndimage.correlate(x, kernel, mode="constant", cval=0.0)


def neighborhood_fwd(p, t, m, nd):
    _same(p, t)
    if m < 1 or m % 2 == 0:
        raise ValueError(f"neighbourhood size must be odd, got {m}")
    diff = box_sum(p, m, nd) - box_sum(t, m, nd)
    return np.asarray(np.abs(diff).mean(), dtype=p.dtype), (np.sign(diff), m, nd)


def neighborhood_bwd(ctx, g):
    sign, m, nd = ctx
    return ((g * box_sum(sign, m, nd) / sign.size).astype(sign.dtype), None)


# -- Var-level wrappers --------------------------------------------------------------


def conv(tape, x, w, b):
    return tape.apply(conv_fwd, conv_bwd, x, w, b)


def relu(tape, x):
    return tape.apply(relu_fwd, relu_bwd, x)


def sigmoid(tape, x):
    return tape.apply(sigmoid_fwd, sigmoid_bwd, x)


def maxpool(tape, x, nd):
    return tape.apply(maxpool_fwd, _pool_bwd, x, nd=nd)


def minpool(tape, x, nd):
    return tape.apply(minpool_fwd, _pool_bwd, x, nd=nd)


def add(tape, a, b):
    return tape.apply(add_fwd, add_bwd, a, b)


def sub(tape, a, b):
    return tape.apply(sub_fwd, sub_bwd, a, b)


def mul(tape, a, b):
    return tape.apply(mul_fwd, mul_bwd, a, b)


def stack(tape, *xs):
    return tape.apply(stack_fwd, stack_bwd, *xs)


def squeeze(tape, x):
    return tape.apply(squeeze_fwd, squeeze_bwd, x)


def ste(tape, x, tau):
    return tape.apply(ste_fwd, ste_bwd, x, tau=tau)


def lincomb(tape, xs, coeffs):
    keep = [(x, c) for x, c in zip(xs, coeffs) if c != 0]
    return tape.apply(lincomb_fwd, lincomb_bwd, *[x for x, _ in keep], coeffs=tuple(c for _, c in keep))


def focal(tape, p, t, gamma, alpha):
    return tape.apply(focal_fwd, focal_bwd, p, Var(t), gamma=gamma, alpha=alpha)


def dice(tape, p, t, nd, eps=1.0):
    return tape.apply(dice_fwd, dice_bwd, p, Var(t), nd=nd, eps=eps)


def neighborhood(tape, p, t, m, nd):
    return tape.apply(neighborhood_fwd, neighborhood_bwd, p, Var(t), m=m, nd=nd)
