"""The compact deletion network and the stochastic binarizer.

The network maps three stacked channels (image, boundary, current skeleton)
through 3-wide stride-1 convolutions with ReLU, and a sigmoid on the last
layer, to a per-pixel deletion probability. Convolutions are
cross-correlations with zero padding of one cell, so output size equals
input size at any resolution.
"""

import itertools
from dataclasses import dataclass, field

import numpy as np

from iterskel import autodiff as ad
from iterskel.errors import ShapeError

TEACHER = (3, 16, 16, 16, 1)
STUDENT = (3, 8, 8, 1)


def teacher_arch():
    return TEACHER


def student_arch():
    return STUDENT


@dataclass
class NetParams:
    ndim: int
    weights: list = field(default_factory=list)  # (out, in, 3, 3[, 3]) per layer
    biases: list = field(default_factory=list)

    def __post_init__(self):
        if self.ndim not in (2, 3):
            raise ShapeError("networks are 2D or 3D")
        if not self.weights or len(self.weights) != len(self.biases):
            raise ShapeError("need one bias vector per weight tensor")
        if self.weights[0].shape[1] != 3 or self.weights[-1].shape[0] != 1:
            raise ShapeError("first layer takes 3 channels and the last emits 1")
        for a, b in zip(self.weights, self.weights[1:]):
            if a.shape[0] != b.shape[1]:
                raise ShapeError("consecutive layers disagree on channel count")
        for w, b in zip(self.weights, self.biases):
            if w.shape[2:] != (3,) * self.ndim or b.shape != (w.shape[0],):
                raise ShapeError(f"bad layer shapes {w.shape}, {b.shape}")

    @property
    def channels(self):
        return (self.weights[0].shape[1],) + tuple(w.shape[0] for w in self.weights)

    @property
    def n_params(self):
        return int(sum(w.size + b.size for w, b in zip(self.weights, self.biases)))

    @property
    def dtype(self):
        return self.weights[0].dtype

    def arrays(self):
        """Flat list ``[w0, b0, w1, b1, ...]`` of the live parameter arrays."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def copy(self, dtype=None):
        dtype = dtype or self.dtype
        return NetParams(
            self.ndim,
            [w.astype(dtype, copy=True) for w in self.weights],
            [b.astype(dtype, copy=True) for b in self.biases],
        )

    def describe(self):
        lines = [f"{self.ndim}D network, {len(self.weights)} conv layers, {self.n_params} parameters"]
        for i, w in enumerate(self.weights):
            act = "sigmoid" if i == len(self.weights) - 1 else "relu"
            lines.append(f"  conv{i}: {w.shape[1]:>3} -> {w.shape[0]:<3} kernel {'x'.join('3' * self.ndim)}  {act}")
        return "\n".join(lines)


def init_net(arch=TEACHER, ndim=2, seed=0, dtype=np.float32):
    """Glorot-uniform weights, zero biases."""
    rng = np.random.default_rng(seed)
    k = 3**ndim
    weights, biases = [], []
    for cin, cout in zip(arch[:-1], arch[1:]):
        lim = np.sqrt(6.0 / (cin * k + cout * k))
        weights.append(rng.uniform(-lim, lim, size=(cout, cin) + (3,) * ndim).astype(dtype))
        biases.append(np.zeros(cout, dtype=dtype))
    return NetParams(ndim, weights, biases)


def conv_forward(x, w, b):
    """One conv layer on a ``(channels, *spatial)`` stack; returns ``(out_channels, *spatial)``."""
    x = np.asarray(x, dtype=w.dtype)
    if x.ndim != w.ndim - 1:
        raise ShapeError(f"expected a (channels, *spatial) stack of ndim {w.ndim - 1}")
    out, _ = ad.conv_fwd(np.moveaxis(x, 0, -1)[None], w, b)
    return np.moveaxis(out[0], -1, 0)


def _forward_batch(params, x):
    """``x``: (B, *spatial, 3) -> (B, *spatial) sigmoid activations."""
    h = x
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        h, _ = ad.conv_fwd(h, w, b)
        if i < last:
            np.maximum(h, 0, out=h)
    return ad.sigmoid_fwd(h[..., 0])[0]


def window_offsets(padded):
    """Flat offsets of the 3-wide window, in kernel raster order, for a C-order array."""
    strides = np.cumprod((1,) + tuple(padded[::-1]))[:-1][::-1]
    return np.array([int(np.dot(o, strides)) for o in itertools.product((-1, 0, 1), repeat=len(padded))])


def layer_matrices(params, channels=3):
    """Per-layer ``(weight matrix, bias)`` for im2col rows ordered (kernel cell, channel).

    The first matrix gets zero rows for input channels past the network's three.
    """
    mats = []
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        wm = np.moveaxis(w, 1, -1)
        if i == 0 and channels > w.shape[1]:
            wide = np.zeros(wm.shape[:-1] + (channels,), dtype=wm.dtype)
            wide[..., : w.shape[1]] = wm
            wm = wide
        mats.append((np.ascontiguousarray(wm.reshape(w.shape[0], -1).T), b))
    return mats


def masked_layers(params, x, cells, offs, inside, buffers=None, domain=None, mats=None):
    """Run the network on selected cells of a framed, flattened stack.

    ``x`` is ``(prod(padded), c)`` with a zero frame of one cell, ``cells``
    the flat indices whose output is wanted and ``inside`` marks non-frame
    cells. Channels past the network's three inputs must be zero; padding
    ``x`` to 4 channels makes the row gathers markedly faster. Layer ``i`` is evaluated only on cells within ``L - 1 - i`` steps of
    ``cells``. Returns the sigmoid outputs at ``cells``.

    ``buffers`` may hold one reusable ``(prod(padded), channels)`` array per
    hidden layer; only cells written in the same call are ever read back.
    ``domain`` optionally lists (sorted) every non-frame cell those layers can
    touch, which saves scanning the whole grid. ``mats`` caches
    :func:`layer_matrices` across calls.
    """
    L = len(params.weights)
    if domain is None:
        domain = np.flatnonzero(inside)
    windows = [cells[:, None] + offs]
    mark = np.zeros(inside.shape, dtype=bool)
    for _ in range(L - 1):
        mark[windows[-1].ravel()] = True
        windows.append(domain[np.take(mark, domain)][:, None] + offs)
    windows.reverse()
    if buffers is None:
        buffers = [np.zeros((x.shape[0], w.shape[0]), dtype=params.dtype) for w in params.weights[:-1]]
    if mats is None:
        mats = layer_matrices(params, x.shape[1])
    h = x
    out = None
    for i, (win, (wm, b)) in enumerate(zip(windows, mats)):
        cols = np.take(h, win, axis=0).reshape(len(win), -1)
        out = cols @ wm
        out += b
        if i < L - 1:
            np.maximum(out, 0, out=out)
            h = buffers[i]
            h[win[:, offs.size // 2]] = out
    return ad.sigmoid_fwd(out[:, 0])[0]


def forward_masked(params, x, mask):
    """Deletion probabilities at the ``mask`` cells only, in raster order.

    ``x`` is one ``(*spatial, 3)`` stack. The cost follows the size of
    ``mask`` rather than of the grid; values agree with :func:`forward` at
    those cells up to float rounding.
    """
    nd = params.ndim
    padded = tuple(n + 2 for n in x.shape[:-1])
    inner = (slice(1, -1),) * nd
    xp = np.zeros(padded + (x.shape[-1],), dtype=params.dtype)
    xp[inner] = x
    inside = np.zeros(padded, dtype=bool)
    inside[inner] = True
    cells = np.flatnonzero(np.pad(np.asarray(mask, dtype=bool), 1))
    return masked_layers(params, xp.reshape(-1, x.shape[-1]), cells, window_offsets(padded), inside.ravel())


def forward(params, image, boundary, skeleton):
    """Deletion probabilities for one grid (or a leading batch axis)."""
    image, boundary, skeleton = (np.asarray(a, dtype=params.dtype) for a in (image, boundary, skeleton))
    if not image.shape == boundary.shape == skeleton.shape:
        raise ShapeError("image, boundary and skeleton must share a shape")
    nd = params.ndim
    if image.ndim not in (nd, nd + 1):
        raise ShapeError(f"expected {nd}D grids for a {nd}D network, got ndim={image.ndim}")
    single = image.ndim == nd
    x = np.stack([image, boundary, skeleton], axis=-1)
    if single:
        x = x[None]
    out = _forward_batch(params, x)
    return out[0] if single else out


def forward_tape(tape, pvars, x):
    """Record the network on ``tape``; ``pvars`` is the flat ``[w0, b0, ...]`` Var list.

    ``x`` is (B, *spatial, 3); the result is (B, *spatial).
    """
    h = x
    n = len(pvars) // 2
    for i in range(n):
        h = ad.conv(tape, h, pvars[2 * i], pvars[2 * i + 1])
        if i < n - 1:
            h = ad.relu(tape, h)
    return ad.sigmoid(tape, ad.squeeze(tape, h))


def watch_params(tape, params, requires_grad=True):
    """Register every parameter array on ``tape`` under names ``w0, b0, w1, ...``."""
    out = []
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        out.append(tape.leaf(w, name=f"w{i}", requires_grad=requires_grad, watch=True))
        out.append(tape.leaf(b, name=f"b{i}", requires_grad=requires_grad, watch=True))
    return out


def backward(tape, loss, loss_grad=None):
    """Gradients of ``loss`` for every named leaf on ``tape`` (parameters and inputs)."""
    return tape.backward(loss, loss_grad)


def draw_tau(rng, shape=None, granularity="grid"):
    """Binarization threshold(s) uniform in (0, 1): one per grid or one per element."""
    if granularity == "grid":
        t = rng.uniform(0.0, 1.0)
        while t == 0.0:
            t = rng.uniform(0.0, 1.0)
        return t
    if granularity == "element":
        return rng.uniform(np.nextafter(0.0, 1.0), 1.0, size=shape)
    raise ValueError(f"unknown binarize granularity {granularity!r}")


def binarize_ste(g, rng=None, tau=None, granularity="grid"):
    """Stochastic threshold ``clip(g, 0, 1) > tau``; returns ``(binary, tau)``.

    The backward pass of this operation is the identity (see
    ``autodiff.ste``); this function is the forward half used at inference.
    """
    g = np.asarray(g)
    if tau is None:
        tau = draw_tau(rng if rng is not None else np.random.default_rng(), g.shape, granularity)
    out, _ = ad.ste_fwd(g.astype(np.float32, copy=False) if g.dtype.kind != "f" else g, tau)
    return out, tau
