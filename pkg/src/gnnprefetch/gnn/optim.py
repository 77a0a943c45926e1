"""Adam with L2 weight decay folded into the gradient."""

from __future__ import annotations

import numpy as np

from .model import ModelParams


class Adam:
    def __init__(self, lr: float = 0.005, weight_decay: float = 1e-4, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        if lr <= 0:
            raise ValueError("learning rate must be positive")
        self.lr = lr
        self.weight_decay = weight_decay
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, params: ModelParams, grads: ModelParams):
        """Update ``params`` in place."""
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for (name, w), (_, g) in zip(params.named(), grads.named()):
            if self.weight_decay:
                g = g + self.weight_decay * w
            if name not in self.m:
                self.m[name] = np.zeros_like(w)
                self.v[name] = np.zeros_like(w)
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            w -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)
