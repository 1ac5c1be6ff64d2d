"""SGD and Adam over lists of parameter tensors.

A step reads each parameter's accumulated ``.grad``, applies the textbook
update, and zeroes the gradients. Non-finite gradients abort the step
before any parameter is touched.
"""

from __future__ import annotations

import numpy as np

from .tensor import Tensor


class OptimStepError(Exception):
    pass


class Optimizer:
    kind = "base"

    def __init__(self, params: list[Tensor], learning_rate: float):
        if learning_rate <= 0.0:
            raise ValueError(f"learning_rate must be positive, got {learning_rate}")
        self.params = list(params)
        self.learning_rate = learning_rate
        self.step_count = 0

    def _grads(self) -> list[np.ndarray]:
        grads = []
        for i, p in enumerate(self.params):
            g = p.grad if p.grad is not None else np.zeros_like(p.values)
            if not np.all(np.isfinite(g)):
                raise OptimStepError(
                    f"non-finite gradient in parameter {i} at step {self.step_count}; "
                    "step aborted")
            grads.append(g)
        return grads

    def step(self) -> None:
        raise NotImplementedError

    def _finish(self) -> None:
        self.step_count += 1
        for p in self.params:
            p.grad = None


class SGD(Optimizer):
    kind = "sgd"

    def step(self) -> None:
        grads = self._grads()
        for p, g in zip(self.params, grads):
            p.values -= self.learning_rate * g
        self._finish()


class Adam(Optimizer):
    """Bias-corrected Adam with the usual defaults."""

    kind = "adam"

    def __init__(self, params, learning_rate: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        super().__init__(params, learning_rate)
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = [np.zeros_like(p.values) for p in self.params]
        self.v = [np.zeros_like(p.values) for p in self.params]

    def step(self) -> None:
        grads = self._grads()
        t = self.step_count + 1
        bc1 = 1.0 - self.beta1 ** t
        bc2 = 1.0 - self.beta2 ** t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.values -= self.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + self.eps)
        self._finish()


def make_optimizer(kind: str, params, learning_rate: float) -> Optimizer:
    if kind == "sgd":
        return SGD(params, learning_rate)
    if kind == "adam":
        return Adam(params, learning_rate)
    raise ValueError(f"unknown optimizer kind {kind!r} (use 'sgd' or 'adam')")
