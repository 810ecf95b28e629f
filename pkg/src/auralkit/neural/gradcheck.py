"""Finite-difference verification of autograd parameter gradients."""

from dataclasses import dataclass

import numpy as np
import torch

from ..errors import NumericalError


@dataclass
class GradCheckReport:
    max_rel_error: float
    per_block: dict
    n_checked: int

    def worst(self):
        return max(self.per_block, key=self.per_block.get)


def _named(params):
    if isinstance(params, torch.nn.Module):
        return dict(params.named_parameters())
    if isinstance(params, dict):
        return params
    return {f"param{i}": p for i, p in enumerate(params)}


def grad_check(loss_fn, params, epsilon=1e-4, max_entries=None, seed=0, atol=1e-6):
    """Compare autograd gradients of ``loss_fn()`` with central differences.

    ``params`` is a module, a name -> tensor dict or a list of leaf tensors
    with ``requires_grad``. Each block's error is the largest absolute
    difference divided by the largest gradient magnitude in that block, or by
    ``atol`` when that is larger: blocks whose exact gradient vanishes (key
    biases under softmax, for one) are then judged on absolute error.
    ``max_entries`` caps the number of entries perturbed per block (a random
    subset, drawn with ``seed``).
    """
    named = _named(params)
    for p in named.values():
        p.grad = None
    loss = loss_fn()
    grads = torch.autograd.grad(loss, list(named.values()), allow_unused=True)
    rng = np.random.default_rng(seed)
    per_block, total = {}, 0
    with torch.no_grad():
        for (name, p), g in zip(named.items(), grads):
            g = torch.zeros_like(p) if g is None else g
            if not torch.all(torch.isfinite(g)):
                raise NumericalError(f"non-finite gradient in {name}", block=name)
            flat, gflat = p.view(-1), g.reshape(-1)
            idx = np.arange(flat.numel())
            if max_entries is not None and len(idx) > max_entries:
                idx = np.sort(rng.choice(idx, max_entries, replace=False))
            analytic = gflat[idx].numpy()
            numeric = np.empty(len(idx))
            for j, i in enumerate(idx):
                orig = flat[i].item()
                flat[i] = orig + epsilon
                up = loss_fn().item()
                flat[i] = orig - epsilon
                down = loss_fn().item()
                flat[i] = orig
                numeric[j] = (up - down) / (2 * epsilon)
            if not np.all(np.isfinite(numeric)):
                raise NumericalError(f"non-finite loss while perturbing {name}", block=name)
            scale = max(np.abs(analytic).max(initial=0), np.abs(numeric).max(initial=0), atol)
            per_block[name] = float(np.abs(analytic - numeric).max(initial=0) / scale)
            total += len(idx)
    worst = max(per_block.values(), default=0.0)
    return GradCheckReport(worst, per_block, total)
