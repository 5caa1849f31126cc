"""Teacher training and per-step distillation."""

import logging
from dataclasses import dataclass, field

import numpy as np

from iterskel import autodiff as ad
from iterskel.bezier import thicken
from iterskel.engine import default_iterations, rollout_tape, run_batch
from iterskel.errors import DivergenceError
from iterskel.losses import LossConfig, composite_tape
from iterskel.metrics import betti_error, dice, thickness
from iterskel.net import watch_params

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    lr: float = 1e-3
    betas: tuple = (0.9, 0.999)
    epsilon: float = 1e-8
    epochs: int = 30
    batch_size: int = 8
    rollout_N: int = 8
    seed: int = 0
    augment: bool = True
    k_max: int = None  # None -> W_trunk of each sample's generator

    def __post_init__(self):
        if self.lr <= 0 or self.epsilon <= 0 or self.epochs < 1 or self.batch_size < 1 or self.rollout_N < 1:
            raise ValueError("training hyperparameters must be positive")


class Adam:
    def __init__(self, params, lr=1e-3, betas=(0.9, 0.999), eps=1e-8):
        self.params = params.arrays()
        self.lr, (self.b1, self.b2), self.eps = lr, betas, eps
        self.m = [np.zeros_like(p) for p in self.params]
        self.v = [np.zeros_like(p) for p in self.params]
        self.t = 0

    def step(self, grads):
        self.t += 1
        c1 = 1 - self.b1**self.t
        c2 = 1 - self.b2**self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.b1
            m += (1 - self.b1) * g
            v *= self.b2
            v += (1 - self.b2) * g * g
            p -= (self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)).astype(p.dtype)


@dataclass
class History:
    loss: list = field(default_factory=list)
    step_loss: list = field(default_factory=list)  # per epoch, held-out loss at each step (distillation)
    val: list = field(default_factory=list)

    def to_dict(self):
        return {"loss": self.loss, "step_loss": self.step_loss, "val": self.val}


def _inputs(samples, rng, tc):
    """Training inputs for one batch, with thickening augmentation."""
    out = []
    for s in samples:
        if tc.augment:
            k_max = s.params.W_trunk if tc.k_max is None else tc.k_max
            out.append(thicken(s, int(rng.integers(0, k_max + 1)), k_max))
        else:
            out.append(s.image)
    return np.stack(out)


def _rollout_len(samples, tc, cache):
    n = 1
    for s in samples:
        key = id(s)
        if key not in cache:
            cache[key] = default_iterations(s.image)
        n = max(n, cache[key])
    return min(n, tc.rollout_N)


def _check(loss):
    if not np.isfinite(loss):
        raise DivergenceError(f"non-finite loss {loss}")


def validate(params, samples, reference=None, N=None):
    """Mean metrics of hard rollouts on ``samples`` against labels or ``reference``."""
    if not samples:
        return {}
    imgs = np.stack([s.image for s in samples])
    n = N or max(default_iterations(s.image) for s in samples)
    preds, _, _ = run_batch(params, imgs, n)
    refs = reference if reference is not None else [s.skeleton for s in samples]
    rows = []
    for p, r in zip(preds, refs):
        b0, b1 = betti_error(p, r)
        avg, mx, _ = thickness(p)
        rows.append((dice(p, r), b0, b1, avg, mx))
    m = np.mean(rows, axis=0)
    return dict(zip(("dice", "b0_err", "b1_err", "avg_thickness", "max99_thickness"), map(float, m)))


def train_teacher(samples, net, tc=None, lc=None, val=None):
    """Fit ``net`` so its final rollout skeleton matches each sample's label.

    Returns ``(params, history)``; ``net`` itself is not modified.
    """
    tc = tc or TrainConfig()
    lc = lc or LossConfig()
    if not samples:
        raise ValueError("empty training set")
    params = net.copy()
    opt = Adam(params, tc.lr, tc.betas, tc.epsilon)
    rng = np.random.default_rng(tc.seed)
    hist = History()
    cache = {}
    nd = params.ndim
    for epoch in range(tc.epochs):
        order = rng.permutation(len(samples))
        total, count = 0.0, 0
        for start in range(0, len(order), tc.batch_size):
            batch = [samples[i] for i in order[start : start + tc.batch_size]]
            x = _inputs(batch, rng, tc)
            target = np.stack([s.skeleton for s in batch]).astype(params.dtype)
            N = _rollout_len(batch, tc, cache)
            tape = ad.Tape()
            pv = watch_params(tape, params)
            S = rollout_tape(tape, pv, x, N, nd)[-1]
            loss = composite_tape(tape, S, target, lc, nd)
            _check(float(loss.value))
            grads = tape.backward(loss)
            opt.step([grads[f"{k}{i}"] for i in range(len(params.weights)) for k in "wb"])
            total += float(loss.value) * len(batch)
            count += len(batch)
        hist.loss.append(total / count)
        if val:
            hist.val.append(validate(params, val))
        log.info("epoch %d loss %.4f %s", epoch, hist.loss[-1], hist.val[-1] if val else "")
    return params, hist


def distill(teacher, student, samples, tc=None, lc=None, per_step=True, val=None):
    """Train ``student`` to reproduce every intermediate skeleton of ``teacher``.

    For each input the teacher is rolled out with hard deltas; the student's
    soft rollout is penalised with the composite loss at every step (or only
    at the last step when ``per_step`` is false), averaged over steps.
    With ``val`` given, ``history.step_loss`` holds the held-out loss at each
    step after every epoch. Returns ``(student_params, history)``.
    """
    tc = tc or TrainConfig()
    lc = lc or LossConfig()
    if not samples:
        raise ValueError("empty training set")
    params = student.copy()
    opt = Adam(params, tc.lr, tc.betas, tc.epsilon)
    rng = np.random.default_rng(tc.seed)
    hist = History()
    cache = {}
    nd = params.ndim
    for epoch in range(tc.epochs):
        order = rng.permutation(len(samples))
        total, count = 0.0, 0
        for start in range(0, len(order), tc.batch_size):
            batch = [samples[i] for i in order[start : start + tc.batch_size]]
            x = _inputs(batch, rng, tc)
            N = _rollout_len(batch, tc, cache)
            _, steps, _ = run_batch(teacher, x, N, record_trace=True)
            targets = [s[3].astype(params.dtype) for s in steps]
            tape = ad.Tape()
            pv = watch_params(tape, params)
            outs = rollout_tape(tape, pv, x, N, nd)
            terms = [composite_tape(tape, o, t, lc, nd) for o, t in zip(outs, targets)]
            used = terms if per_step else terms[-1:]
            loss = ad.lincomb(tape, used, [1.0 / len(used)] * len(used))
            _check(float(loss.value))
            grads = tape.backward(loss)
            opt.step([grads[f"{k}{i}"] for i in range(len(params.weights)) for k in "wb"])
            total += float(loss.value) * len(batch)
            count += len(batch)
        hist.loss.append(total / count)
        if val:
            hist.step_loss.append(distill_loss(teacher, params, val, lc, tc.rollout_N)[1])
            ref = [run_batch(teacher, s.image[None], default_iterations(s.image))[0][0] for s in val]
            hist.val.append(validate(params, val, reference=ref))
        log.info("distill epoch %d loss %.4f", epoch, hist.loss[-1])
    return params, hist


def distill_loss(teacher, student, samples, lc=None, N=None):
    """Mean per-step distillation loss of ``student`` without updating it."""
    lc = lc or LossConfig()
    x = np.stack([s.image for s in samples])
    N = min(N or 10**9, max(default_iterations(s.image) for s in samples))
    _, steps, _ = run_batch(teacher, x, N, record_trace=True)
    tape = ad.Tape()
    pv = watch_params(tape, student, requires_grad=False)
    outs = rollout_tape(tape, pv, x, N, student.ndim)
    vals = [float(composite_tape(tape, o, s[3].astype(student.dtype), lc, student.ndim).value)
            for o, s in zip(outs, steps)]
    return float(np.mean(vals)), vals

