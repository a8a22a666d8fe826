"""Parameter updates: plain SGD and bias-corrected Adam."""

from __future__ import annotations

import numpy as np

from ..errors import ShapeError
from .tensor import Tensor

__all__ = ["Sgd", "Adam", "make_optimizer", "zero_grads"]


def zero_grads(params: list[Tensor]):
    for p in params:
        p.grad = None


class Sgd:
    def __init__(self, params: list[Tensor], lr: float):
        self.params = params
        self.lr = lr

    def step(self):
        for p in self.params:
            if p.grad is None:
                continue
            if p.grad.shape != p.data.shape:
                raise ShapeError("gradient shape does not match parameter")
            p.data -= p.dtype.type(self.lr) * p.grad


class Adam:
    def __init__(
        self,
        params: list[Tensor],
        lr: float,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.first_moment = [np.zeros_like(p.data) for p in params]
        self.second_moment = [np.zeros_like(p.data) for p in params]

    def step(self):
        self.step_count += 1
        b1, b2 = self.beta1, self.beta2
        correction1 = 1.0 - b1**self.step_count
        correction2 = 1.0 - b2**self.step_count
        for p, m, v in zip(self.params, self.first_moment, self.second_moment):
            if p.grad is None:
                continue
            if p.grad.shape != p.data.shape:
                raise ShapeError("gradient shape does not match parameter")
            g = p.grad
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * (g * g)
            m_hat = m / correction1
            v_hat = v / correction2
            p.data -= (self.lr * m_hat / (np.sqrt(v_hat) + self.eps)).astype(p.dtype)


def make_optimizer(kind: str, params: list[Tensor], lr: float):
    if kind == "adam":
        return Adam(params, lr)
    if kind == "sgd":
        return Sgd(params, lr)
    raise ValueError(f"unknown optimizer {kind!r}")
