"""RMSprop without weight decay."""

from __future__ import annotations

import numpy as np

from .network import ModelParams


class RMSprop:
    def __init__(self, lr=1e-4, decay=0.99, eps=1e-8):
        self.lr = lr
        self.decay = decay
        self.eps = eps
        self.square_avg: dict[str, np.ndarray] = {}

    def step(self, params: ModelParams, grads: dict[str, np.ndarray]) -> ModelParams:
        new = {}
        for name, theta in params.items():
            g = grads[name]
            v = self.square_avg.get(name)
            if v is None:
                v = np.zeros_like(theta)
            v = self.decay * v + (1.0 - self.decay) * g * g
            self.square_avg[name] = v
            new[name] = theta - self.lr * g / (np.sqrt(v) + self.eps)
        return ModelParams(params.config, new)


def rmsprop_update(params: ModelParams, grads: dict[str, np.ndarray], lr=1e-4, decay=0.99,
                   eps=1e-8, square_avg: dict[str, np.ndarray] | None = None):
    """Functional form: returns (updated params, updated running averages)."""
    opt = RMSprop(lr, decay, eps)
    if square_avg is not None:
        opt.square_avg = {k: v.copy() for k, v in square_avg.items()}
    new = opt.step(params, grads)
    return new, opt.square_avg
