"""AdamW with decoupled weight decay."""

from __future__ import annotations

import numpy as np


class AdamW:
    """Adam with weight decay applied directly to the parameters.

    Per step ``t`` and parameter ``p`` with gradient ``g``::

        p <- p - lr * wd * p
        m <- b1 m + (1 - b1) g;   v <- b2 v + (1 - b2) g**2
        p <- p - lr * (m / (1 - b1**t)) / (sqrt(v / (1 - b2**t)) + eps)

    Defaults follow the usual library defaults except ``lr = 0.01``.
    """

    def __init__(self, params: list, lr: float = 0.01, betas=(0.9, 0.999), eps: float = 1e-8,
                 weight_decay: float = 0.01):
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self.m = [None if p is None else tuple(np.zeros_like(a) for a in p) for p in params]
        self.v = [None if p is None else tuple(np.zeros_like(a) for a in p) for p in params]

    def step(self, params: list, grads: list) -> list:
        """Update ``params`` in place and return them."""
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1**self.t
        c2 = 1.0 - b2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            if p is None:
                continue
            for a, ga, ma, va in zip(p, g, m, v):
                if self.weight_decay:
                    a *= 1.0 - self.lr * self.weight_decay
                ma *= b1
                ma += (1.0 - b1) * ga
                va *= b2
                va += (1.0 - b2) * ga * ga
                a -= self.lr * (ma / c1) / (np.sqrt(va / c2) + self.eps)
        return params
