"""RMSProp with optional global-norm gradient clipping.

Update rule, per parameter:

    cache <- rho * cache + (1 - rho) * grad^2
    value <- value - lr * grad / sqrt(cache + eps)

The cache persists across steps.  Rows listed in a parameter's
``frozen_rows`` are never updated (the PAD embedding row stays zero).
"""

from __future__ import annotations

import math

import numpy as np

from .autodiff import Parameter


def clip_global_norm(params, max_norm: float) -> float:
    """Scale all gradients so their joint L2 norm is at most ``max_norm``.

    Returns the pre-clip norm.
    """
    total = 0.0
    for p in params:
        total += float((p.grad.astype(np.float64) ** 2).sum())
    norm = math.sqrt(total)
    if max_norm > 0 and norm > max_norm:
        factor = max_norm / norm
        for p in params:
            p.grad *= factor
    return norm


class RMSProp:
    def __init__(self, params, lr: float = 1e-3, rho: float = 0.9,
                 eps: float = 1e-8, clip_norm: float = 0.0):
        self.params = list(params)
        self.lr = lr
        self.rho = rho
        self.eps = eps
        self.clip_norm = clip_norm
        self._cache = {p.name: np.zeros_like(p.data) for p in self.params}

    def step(self) -> None:
        for p in self.params:
            if p.frozen_rows:
                p.grad[list(p.frozen_rows)] = 0
        if self.clip_norm > 0:
            clip_global_norm(self.params, self.clip_norm)
        for p in self.params:
            cache = self._cache[p.name]
            grad = p.grad
            cache *= self.rho
            cache += (1.0 - self.rho) * grad * grad
            p.data -= self.lr * grad / np.sqrt(cache + self.eps)

    def zero_grads(self) -> None:
        for p in self.params:
            p.zero_grad()
