"""Optimizers: plain SGD with norm clipping and Adam."""

from __future__ import annotations

import numpy as np


def global_grad_norm(params):
    total = 0.0
    for p in params:
        if p.grad is not None:
            total += float((p.grad * p.grad).sum())
    return np.sqrt(total)


def clip_grad_norm(params, max_norm):
    """Scale gradients in place so the global L2 norm is at most max_norm."""
    norm = global_grad_norm(params)
    if max_norm is not None and norm > max_norm > 0:
        scale = max_norm / norm
        for p in params:
            if p.grad is not None:
                p.grad *= scale
    return norm


class SGD:
    def __init__(self, params, lr=1.0, clip_norm=None):
        self.params = list(params)
        self.lr = lr
        self.clip_norm = clip_norm

    def step(self):
        if self.clip_norm is not None:
            clip_grad_norm(self.params, self.clip_norm)
        for p in self.params:
            if p.grad is not None:
                p.data -= self.lr * p.grad

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()


class Adam:
    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8, clip_norm=None):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.clip_norm = clip_norm
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]
        self._buf = [np.empty_like(p.data) for p in self.params]

    def step(self):
        if self.clip_norm is not None:
            clip_grad_norm(self.params, self.clip_norm)
        self.t += 1
        b1c = 1.0 - self.beta1**self.t
        b2c = 1.0 - self.beta2**self.t
        for p, m, v, buf in zip(self.params, self.m, self.v, self._buf):
            if p.grad is None:
                continue
            m *= self.beta1
            m += (1.0 - self.beta1) * p.grad
            v *= self.beta2
            np.multiply(p.grad, p.grad, out=buf)
            buf *= 1.0 - self.beta2
            v += buf
            np.divide(v, b2c, out=buf)
            np.sqrt(buf, out=buf)
            buf += self.eps
            np.divide(m, buf, out=buf)
            buf *= self.lr / b1c
            p.data -= buf

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()
