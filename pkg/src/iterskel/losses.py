"""Skeleton losses: focal, Dice and neighbourhood, and their weighted sum."""

from dataclasses import dataclass

import numpy as np

from iterskel import autodiff as ad


@dataclass(frozen=True)
class LossConfig:
    focal_gamma: float = 2.0
    focal_alpha: float = 0.25
    neighborhood_m: int = 3
    weights: tuple = (1.0, 1.0, 1.0)  # focal, dice, neighbourhood

    def __post_init__(self):
        if self.neighborhood_m < 3 or self.neighborhood_m % 2 == 0:
            raise ValueError("neighborhood_m must be odd and >= 3")
        if len(self.weights) != 3 or min(self.weights) < 0:
            raise ValueError("weights must be three non-negative numbers")


def _batched(pred, target):
    p = np.asarray(pred, dtype=np.float64)[None]
    t = np.asarray(target, dtype=np.float64)[None]
    return p, t


def focal_loss(pred, target, gamma=2.0, alpha=0.25):
    """Mean of ``-alpha (1 - p_t)^gamma log p_t``; ``log`` is clamped at 1e-12."""
    p, t = _batched(pred, target)
    return float(ad.focal_fwd(p, t, gamma, alpha)[0])


def dice_loss(pred, target, eps=1.0):
    """``1 - (2 sum(p t) + eps) / (sum p + sum t + eps)``."""
    p, t = _batched(pred, target)
    return float(ad.dice_fwd(p, t, p.ndim - 1, eps)[0])


def neighborhood_loss(pred, target, m=3):
    """Mean absolute difference of the ``m``-wide box sums of ``pred`` and ``target``."""
    p, t = _batched(pred, target)
    return float(ad.neighborhood_fwd(p, t, m, p.ndim - 1)[0])


def composite_loss(pred, target, lc=LossConfig()):
    wf, wd, wn = lc.weights
    return (
        wf * focal_loss(pred, target, lc.focal_gamma, lc.focal_alpha)
        + wd * dice_loss(pred, target)
        + wn * neighborhood_loss(pred, target, lc.neighborhood_m)
    )


def composite_tape(tape, pred, target, lc, nd):
    """Weighted loss sum recorded on ``tape``; ``pred`` is a ``(B, *spatial)`` Var."""
    terms = [
        ad.focal(tape, pred, target, lc.focal_gamma, lc.focal_alpha),
        ad.dice(tape, pred, target, nd),
        ad.neighborhood(tape, pred, target, lc.neighborhood_m, nd),
    ]
    return ad.lincomb(tape, terms, lc.weights)
