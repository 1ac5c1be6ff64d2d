"""Small fully connected networks used by every model in the package."""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .rng import Rng
from .tensor import Tensor

_ACTIVATIONS = {
    "relu": (T.relu, lambda v: np.maximum(v, 0.0)),
    "tanh": (T.tanh, np.tanh),
}


class MLP:
    """Plain multilayer perceptron, linear output layer, He-initialized.

    ``forward`` builds a tape for training; ``forward_np`` is the lean
    inference path on raw numpy arrays. Both compute the same formulas.
    """

    def __init__(self, sizes: list[int], rng: Rng, activation: str = "relu",
                 name: str = "mlp"):
        if len(sizes) < 2:
            raise ValueError(f"need at least input and output sizes, got {sizes}")
        if activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        self.sizes = list(sizes)
        self.activation = activation
        self.name = name
        self.weights: list[Tensor] = []
        self.biases: list[Tensor] = []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            scale = np.sqrt(2.0 / fan_in)
            self.weights.append(Tensor(rng.normal((fan_in, fan_out), scale),
                                       requires_grad=True))
            self.biases.append(Tensor(np.zeros(fan_out), requires_grad=True))

    @property
    def in_dim(self) -> int:
        return self.sizes[0]

    @property
    def out_dim(self) -> int:
        return self.sizes[-1]

    def params(self) -> list[Tensor]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def named_params(self) -> list[tuple[str, Tensor]]:
        out = []
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            out.append((f"{self.name}.w{i}", w))
            out.append((f"{self.name}.b{i}", b))
        return out

    def forward(self, x: Tensor) -> Tensor:
        act, _ = _ACTIVATIONS[self.activation]
        h = x
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = T.matmul(h, w) + b
            if i != last:
                h = act(h)
        return h

    def forward_np(self, x: np.ndarray) -> np.ndarray:
        _, act = _ACTIVATIONS[self.activation]
        h = x
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w.values + b.values
            if i != last:
                h = act(h)
        return h
