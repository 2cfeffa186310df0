"""Adam and SGD-with-momentum, both with classical L2-in-gradient weight decay."""

from __future__ import annotations

import numpy as np


def adam_step(param, grad, m, v, t: int, lr: float, beta1=0.9, beta2=0.999,
              eps=1e-8, weight_decay=0.0) -> None:
    """One bias-corrected Adam update, in place. `t` is the 1-based step index."""
    g = grad + weight_decay * param if weight_decay else grad
    m[...] = beta1 * m + (1 - beta1) * g
    v[...] = beta2 * v + (1 - beta2) * (g * g)
    mhat = m / (1 - beta1 ** t)
    vhat = v / (1 - beta2 ** t)
    param -= (lr * mhat / (np.sqrt(vhat) + eps)).astype(param.dtype)


def sgd_momentum_step(param, grad, velocity, lr: float, momentum=0.9,
                      weight_decay=0.0) -> None:
    """v <- momentum*v + (grad + wd*param); param <- param - lr*v, in place."""
    g = grad + weight_decay * param if weight_decay else grad
    velocity[...] = momentum * velocity + g
    param -= (lr * velocity).astype(param.dtype)


class Adam:
    def __init__(self, params: dict, lr: float = 1e-3, beta1=0.9, beta2=0.999,
                 eps=1e-8, weight_decay=0.0):
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.weight_decay = weight_decay
        self.t = 0
        self.m = {k: np.zeros_like(p) for k, p in params.items()}
        self.v = {k: np.zeros_like(p) for k, p in params.items()}

    def step(self, params: dict, grads: dict) -> None:
        self.t += 1
        for name in sorted(params):
            adam_step(params[name], grads[name], self.m[name], self.v[name],
                      self.t, self.lr, self.beta1, self.beta2, self.eps, self.weight_decay)

    def state_arrays(self) -> dict:
        out = {f"opt.m.{k}": v for k, v in self.m.items()}
        out.update({f"opt.v.{k}": v for k, v in self.v.items()})
        return out


class SGDMomentum:
    def __init__(self, params: dict, lr: float = 1e-1, momentum=0.9, weight_decay=0.0):
        self.lr = lr
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.velocity = {k: np.zeros_like(p) for k, p in params.items()}

    def step(self, params: dict, grads: dict) -> None:
        for name in sorted(params):
            sgd_momentum_step(params[name], grads[name], self.velocity[name],
                              self.lr, self.momentum, self.weight_decay)

    def state_arrays(self) -> dict:
        return {f"opt.v.{k}": v for k, v in self.velocity.items()}


def make_optimizer(kind: str, params: dict, lr: float, weight_decay: float):
    if kind == "adam":
        return Adam(params, lr=lr, weight_decay=weight_decay)
    if kind == "momentum":
        return SGDMomentum(params, lr=lr, weight_decay=weight_decay)
    raise ValueError(f"unknown optimizer {kind!r} (expected 'adam' or 'momentum')")
