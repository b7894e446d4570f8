"""Optimizers: Adam with decoupled weight decay, plus plain SGD."""

from __future__ import annotations

import numpy as np


class Adam:
    """Adam (beta1=0.9, beta2=0.999, eps=1e-8) with decoupled weight decay
    applied before the adaptive step."""

    def __init__(self, params, lr=1e-3, weight_decay=0.0,
                 beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.weight_decay = weight_decay
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.state = {p.name: {"m": np.zeros_like(p.value, dtype=np.float64),
                               "v": np.zeros_like(p.value, dtype=np.float64),
                               "t": 0}
                      for p in self.params}

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()

    def step(self):
        for p in self.params:
            g = np.asarray(p.grad, dtype=np.float64)
            st = self.state[p.name]
            if self.weight_decay:
                p.value = p.value - p.value.dtype.type(self.lr * self.weight_decay) * p.value
            st["t"] += 1
            st["m"] = self.beta1 * st["m"] + (1 - self.beta1) * g
            st["v"] = self.beta2 * st["v"] + (1 - self.beta2) * g * g
            m_hat = st["m"] / (1 - self.beta1 ** st["t"])
            v_hat = st["v"] / (1 - self.beta2 ** st["t"])
            update = self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
            p.value = (p.value.astype(np.float64) - update).astype(p.value.dtype)


class SGD:
    def __init__(self, params, lr=1e-3, weight_decay=0.0):
        self.params = list(params)
        self.lr = lr
        self.weight_decay = weight_decay

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()

    def step(self):
        for p in self.params:
            v = p.value.astype(np.float64)
            if self.weight_decay:
                v = v - self.lr * self.weight_decay * v
            p.value = (v - self.lr * np.asarray(p.grad, dtype=np.float64)).astype(
                p.value.dtype)


def adam_step(params, lr, weight_decay=0.0, state=None, **kwargs):
    """Functional one-shot Adam step; returns the (possibly fresh) state."""
    opt = Adam.__new__(Adam)
    opt.params = list(params)
    opt.lr = lr
    opt.weight_decay = weight_decay
    opt.beta1 = kwargs.get("beta1", 0.9)
    opt.beta2 = kwargs.get("beta2", 0.999)
    opt.eps = kwargs.get("eps", 1e-8)
    if state is None:
        state = {p.name: {"m": np.zeros_like(p.value, dtype=np.float64),
                          "v": np.zeros_like(p.value, dtype=np.float64),
                          "t": 0}
                 for p in opt.params}
    opt.state = state
    opt.step()
    return state
