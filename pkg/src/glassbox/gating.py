"""Discrete gates: Gumbel-sigmoid relaxation with a straight-through forward.

At train time each gate draws a relaxed Bernoulli sample but presents a
hard 0/1 value on the forward path, backpropagating through the relaxed
sample. At inference the gate is a plain deterministic threshold and
consumes no randomness. For any temperature the hard forward value is
exactly Bernoulli(p), because the relaxed sample crosses 0.5 iff
logit(p) + logistic noise crosses 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .rng import Rng
from .tensor import Tensor

TRAIN_SOFT = "train_soft"
INFERENCE_HARD = "inference_hard"

# Keeps logit(p) finite when upstream sigmoids saturate in float64.
_P_EPS = 1e-9


@dataclass(frozen=True)
class GateConfig:
    """Sparsity and relaxation knobs for gated models."""

    sparsity_coefficient: float = 0.1
    temperature_start: float = 5.0
    temperature_end: float = 0.5
    anneal_rate: float = 0.95
    selection: str = "threshold"  # or "top_k"
    k: int = 1

    def __post_init__(self):
        if self.sparsity_coefficient < 0:
            raise ValueError("sparsity_coefficient must be non-negative")
        if not (self.temperature_start >= self.temperature_end > 0):
            raise ValueError(
                f"need temperature_start >= temperature_end > 0, got "
                f"{self.temperature_start}, {self.temperature_end}")
        if not (0 < self.anneal_rate <= 1):
            raise ValueError("anneal_rate must lie in (0, 1]")
        if self.selection not in ("threshold", "top_k"):
            raise ValueError(f"unknown selection mode {self.selection!r}")
        if self.selection == "top_k" and self.k < 1:
            raise ValueError("top_k selection needs k >= 1")

    def temperature_at(self, epoch: int) -> float:
        return max(self.temperature_end,
                   self.temperature_start * self.anneal_rate ** epoch)

    def to_dict(self) -> dict:
        return {"sparsity_coefficient": self.sparsity_coefficient,
                "temperature_start": self.temperature_start,
                "temperature_end": self.temperature_end,
                "anneal_rate": self.anneal_rate,
                "selection": self.selection, "k": self.k}

    @staticmethod
    def from_dict(obj: dict) -> "GateConfig":
        return GateConfig(**obj)


def hard_mask(probabilities: Tensor, temperature: float, rng: Rng | None,
              mode: str) -> Tensor:
    """Binarize gate probabilities.

    train_soft: straight-through Gumbel-sigmoid sample, hard forward value,
    relaxed gradient. inference_hard: deterministic threshold at 0.5, no
    randomness consumed, no gradient.
    """
    if temperature <= 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    if mode == INFERENCE_HARD:
        return Tensor((probabilities.values >= 0.5).astype(np.float64))
    if mode != TRAIN_SOFT:
        raise ValueError(f"unknown mask mode {mode!r}")
    if rng is None:
        raise ValueError("train_soft mode needs an rng")
    p = T.clip(probabilities, _P_EPS, 1.0 - _P_EPS)
    logit = T.log(p) - T.log(1.0 - p)
    noise = Tensor(rng.logistic(probabilities.values.shape))
    relaxed = T.sigmoid((logit + noise) * (1.0 / temperature))
    hard = (relaxed.values >= 0.5).astype(np.float64)
    return straight_through(hard, relaxed)


def straight_through(hard: np.ndarray, relaxed: Tensor) -> Tensor:
    """Exactly ``hard`` on the forward path, identity gradient to ``relaxed``."""

    def backward(g):
        relaxed._ensure_grad()
        relaxed.grad += g

    return Tensor._from_op(np.asarray(hard, dtype=np.float64), "straight_through",
                           (relaxed,), backward)


def sparsity_penalty(scores: Tensor, coefficient: float) -> Tensor:
    """Expected active fraction times the sparsity coefficient.

    Under hard-threshold semantics mean(scores) is a differentiable
    surrogate for the expected number of active gates.
    """
    if coefficient < 0:
        raise ValueError(f"sparsity coefficient must be non-negative, got {coefficient}")
    return T.tmean(scores) * coefficient
