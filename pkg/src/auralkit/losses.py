"""Training losses for the early-reflection waveform (torch, differentiable).

    L = alpha (L_mel(spectral) + L_mel(temporal)) + beta L_W + gamma L_IC

L_W is waveform MSE, each L_mel is the MSE between log-mel matrices and
L_IC compares inter-channel differences.
"""

from dataclasses import dataclass

import numpy as np
import torch

from .config import DEFAULTS
from .errors import DomainError, ShapeError
from .metrics import SPECTRAL, TEMPORAL, log_mel


@dataclass(frozen=True)
class LossWeights:
    alpha: float = DEFAULTS["loss_weights"]["alpha"]
    beta: float = DEFAULTS["loss_weights"]["beta"]
    gamma: float = DEFAULTS["loss_weights"]["gamma"]

    def __post_init__(self):
        w = (self.alpha, self.beta, self.gamma)
        if min(w) < 0 or max(w) <= 0:
            raise DomainError("loss weights must be non-negative with at least one positive")


def as_tensor(x):
    if isinstance(x, torch.Tensor):
        return x
    x = getattr(x, "channels", x)
    return torch.as_tensor(np.asarray(x, dtype=float))


def _pair(pred, target):
    p, t = as_tensor(pred), as_tensor(target)
    if p.shape != t.shape:
        raise ShapeError(f"shape mismatch {tuple(p.shape)} vs {tuple(t.shape)}")
    return p, t


def loss_waveform(pred, target):
    p, t = _pair(pred, target)
    return torch.mean((p - t) ** 2)


def loss_mel(pred, target, cfg):
    p, t = _pair(pred, target)
    return torch.mean((log_mel(p, cfg) - log_mel(t, cfg)) ** 2)


def loss_ic(pred, target, cyclic=DEFAULTS["loss_ic_cyclic"]):
    """Inter-channel difference MSE over (C, T) signals.

    With ``cyclic`` the last channel pairs with the first, giving C terms;
    otherwise C - 1 terms. Normalized by C * T either way.
    """
    p, t = _pair(pred, target)
    if p.ndim != 2:
        raise ShapeError("loss_ic expects (channels, samples)")
    c, n = p.shape
    if cyclic:
        dt = t - torch.roll(t, -1, 0)
        dp = p - torch.roll(p, -1, 0)
    else:
        dt = t[:-1] - t[1:]
        dp = p[:-1] - p[1:]
    return torch.sum((dt - dp) ** 2) / (c * n)


def loss_total(pred, target, weights=LossWeights(), cfg1=SPECTRAL, cfg2=TEMPORAL):
    """Weighted early-reflection loss; returns (total, per-term dict)."""
    terms = {
        "mel": loss_mel(pred, target, cfg1),
        "mel_t": loss_mel(pred, target, cfg2),
        "wave": loss_waveform(pred, target),
        "ic": loss_ic(pred, target),
    }
    total = (
        weights.alpha * (terms["mel"] + terms["mel_t"])
        + weights.beta * terms["wave"]
        + weights.gamma * terms["ic"]
    )
    return total, terms
