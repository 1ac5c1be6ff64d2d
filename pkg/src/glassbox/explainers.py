"""Post-hoc explainers over opaque predict functions, plus the shared
Explanation record that intrinsic explanations also use.

All explainers are pure functions of (model, inputs, seed) and record
their wall-clock cost. Absent features are always imputed to a single
reference baseline vector (the training mean), which keeps Shapley
coalitions, LIME neighborhoods and the gated models' imputation mutually
comparable.
"""

from __future__ import annotations

import json
import time
import warnings
from dataclasses import dataclass, field
from math import factorial

import numpy as np

from .rng import Rng

EXPLAINER_METHODS = ("interpretcc", "shapley_exact", "shapley_sampled",
                     "lime", "permutation")

SHAPLEY_EXACT_MAX_FEATURES = 15
_SHAPLEY_EXACT_MAX_FEATURES = SHAPLEY_EXACT_MAX_FEATURES
_EVAL_CHUNK = 1024


@dataclass
class Explanation:
    """Per-feature attribution vector with method tag and provenance."""

    method: str
    attributions: np.ndarray
    target_class: int | None
    latency_ms: float
    seed: int | None = None
    instance_id: int | None = None
    active_groups: list[dict] | None = None
    checkpoint_id: str | None = None

    def __post_init__(self):
        self.attributions = np.asarray(self.attributions, dtype=np.float64)
        if not np.all(np.isfinite(self.attributions)):
            raise ValueError(f"{self.method} produced non-finite attributions")

    def to_record(self) -> dict:
        return {
            "method": self.method,
            "feature_attributions": [float(a) for a in self.attributions],
            "target_class": None if self.target_class is None else int(self.target_class),
            "active_groups": self.active_groups,
            "latency_ms": float(self.latency_ms),
            "seed": self.seed,
            "instance_id": self.instance_id,
            "checkpoint_id": self.checkpoint_id,
        }

    def canonical_bytes(self) -> bytes:
        """Deterministic serialization of the explanation content.

        Latency is wall-clock measurement noise, not explanation content,
        so it is excluded here; byte equality means identical explanations.
        """
        record = self.to_record()
        del record["latency_ms"]
        return json.dumps(record, sort_keys=True, separators=(",", ":")).encode()


class BlackBox:
    """Opaque batched predict function plus its input/output dimensions.

    ``predict_fn`` maps an (n, num_features) array to (n, num_classes)
    probabilities. Outputs are checked to sum to 1 within 1e-6. The
    callable must be safe for concurrent read-only calls.
    """

    def __init__(self, predict_fn, num_features: int, num_classes: int,
                 name: str = "blackbox", model=None):
        self.predict_fn = predict_fn
        self.num_features = num_features
        self.num_classes = num_classes
        self.name = name
        self.model = model

    def predict(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        if single:
            x = x[None, :]
        if x.shape[1] != self.num_features:
            raise ValueError(
                f"{self.name}: expected {self.num_features} features, got {x.shape[1]}")
        out = self.predict_fn(x)
        sums = out.sum(axis=1)
        if not np.all(np.abs(sums - 1.0) <= 1e-6):
            bad = int(np.argmax(np.abs(sums - 1.0)))
            raise ValueError(
                f"{self.name}: probabilities sum to {sums[bad]!r} on row {bad}")
        return out[0] if single else out

    def argmax_class(self, x: np.ndarray) -> int:
        return int(np.argmax(self.predict(x)))


def _coalition_values(f: BlackBox, rows: np.ndarray, target: int) -> np.ndarray:
    """Evaluate the target-class probability on rows, in bounded chunks."""
    out = np.empty(rows.shape[0])
    for start in range(0, rows.shape[0], _EVAL_CHUNK):
        chunk = rows[start:start + _EVAL_CHUNK]
        out[start:start + chunk.shape[0]] = f.predict(chunk)[:, target]
    return out


def shapley_exact(f: BlackBox, x: np.ndarray, baseline: np.ndarray,
                  target_class: int | None = None) -> Explanation:
    """Exact Shapley values over all 2^d coalitions.

    Absent features take the baseline value. Cost doubles per feature;
    refuses above d=15 (use shapley_sampled instead).
    """
    t0 = time.perf_counter()
    x = np.asarray(x, dtype=np.float64)
    baseline = np.asarray(baseline, dtype=np.float64)
    d = f.num_features
    if d > _SHAPLEY_EXACT_MAX_FEATURES:
        raise ValueError(
            f"shapley_exact needs 2^{d} model calls for {d} features; "
            f"limit is {_SHAPLEY_EXACT_MAX_FEATURES}. Use shapley_sampled.")
    if target_class is None:
        target_class = f.argmax_class(x)
    masks = np.arange(2 ** d, dtype=np.uint32)
    member = ((masks[:, None] >> np.arange(d)) & 1).astype(bool)
    rows = np.where(member, x, baseline)
    values = _coalition_values(f, rows, target_class)
    sizes = np.bitwise_count(masks).astype(np.int64)
    # weight of a coalition S when adding feature i: |S|! (d-|S|-1)! / d!
    size_weight = np.array([factorial(s) * factorial(d - s - 1) / factorial(d)
                            for s in range(d)])
    phi = np.empty(d)
    for i in range(d):
        without = masks[~member[:, i]]
        gain = values[without | np.uint32(1 << i)] - values[without]
        phi[i] = float(np.dot(size_weight[sizes[without]], gain))
    latency = (time.perf_counter() - t0) * 1e3
    return Explanation("shapley_exact", phi, target_class, latency)


def shapley_sampled(f: BlackBox, x: np.ndarray, baseline: np.ndarray,
                    n_permutations: int, rng: Rng,
                    target_class: int | None = None) -> Explanation:
    """Monte-Carlo permutation estimate of Shapley values (unbiased)."""
    t0 = time.perf_counter()
    if n_permutations < 1:
        raise ValueError("need at least one permutation")
    x = np.asarray(x, dtype=np.float64)
    baseline = np.asarray(baseline, dtype=np.float64)
    d = f.num_features
    if target_class is None:
        target_class = f.argmax_class(x)
    seed = rng.seed
    phi = np.zeros(d)
    perms_per_chunk = max(1, _EVAL_CHUNK // (d + 1))
    done = 0
    while done < n_permutations:
        batch = min(perms_per_chunk, n_permutations - done)
        perms = np.stack([rng.permutation(d) for _ in range(batch)])
        member = np.zeros((batch, d + 1, d), dtype=bool)
        for step in range(d):
            member[:, step + 1] = member[:, step]
            member[np.arange(batch), step + 1, perms[:, step]] = True
        rows = np.where(member.reshape(-1, d), x, baseline)
        values = _coalition_values(f, rows, target_class).reshape(batch, d + 1)
        marginals = np.diff(values, axis=1)
        np.add.at(phi, perms.reshape(-1), marginals.reshape(-1))
        done += batch
    phi /= n_permutations
    latency = (time.perf_counter() - t0) * 1e3
    return Explanation("shapley_sampled", phi, target_class, latency, seed=seed)


def lime_local(f: BlackBox, x: np.ndarray, n_samples: int = 1000,
               kernel_width: float | None = None, rng: Rng | None = None,
               target_class: int | None = None, ridge: float = 1e-3) -> Explanation:
    """Ridge-regularized weighted linear surrogate on Gaussian perturbations.

    Perturbations are unit-variance Gaussian around x (features are assumed
    standardized); sample weights decay as exp(-||z - x||^2 / kernel_width^2).
    Coefficients of the fit are the attributions.
    """
    t0 = time.perf_counter()
    x = np.asarray(x, dtype=np.float64)
    d = f.num_features
    if n_samples < d + 2:
        raise ValueError(f"lime needs at least d+2={d + 2} samples, got {n_samples}")
    if rng is None:
        rng = Rng(0)
    if kernel_width is None:
        kernel_width = 0.75 * np.sqrt(d)
    seed = rng.seed
    z = x + rng.normal((n_samples, d))
    y = f.predict(z)
    if target_class is None:
        target_class = f.argmax_class(x)
    y = y[:, target_class]
    w = np.exp(-np.sum((z - x) ** 2, axis=1) / kernel_width ** 2)
    design = np.concatenate([z, np.ones((n_samples, 1))], axis=1)
    penalty = np.diag(np.concatenate([np.full(d, 1.0), [0.0]]))  # free intercept
    lhs_base = (design * w[:, None]).T @ design
    rhs = (design * w[:, None]).T @ y
    current = ridge
    for attempt in range(4):
        try:
            beta = np.linalg.solve(lhs_base + current * penalty, rhs)
            break
        except np.linalg.LinAlgError:
            current *= 10.0
            warnings.warn(
                f"lime normal equations singular; raising ridge to {current}")
    else:
        raise np.linalg.LinAlgError("lime normal equations remained singular")
    latency = (time.perf_counter() - t0) * 1e3
    return Explanation("lime", beta[:d], target_class, latency, seed=seed)


def permutation_importance(f: BlackBox, dataset, rng: Rng,
                           metric: str = "accuracy",
                           n_repeats: int = 5) -> Explanation:
    """Global importance: mean metric drop when one column is shuffled."""
    t0 = time.perf_counter()
    if dataset.n == 0:
        raise ValueError("permutation importance needs a non-empty dataset")
    if metric != "accuracy":
        raise ValueError(f"unsupported metric {metric!r}")
    seed = rng.seed
    x, y = dataset.features, dataset.labels
    base = float(np.mean(f.predict(x).argmax(axis=1) == y))
    d = x.shape[1]
    drops = np.zeros(d)
    for i in range(d):
        for _ in range(n_repeats):
            shuffled = x.copy()
            shuffled[:, i] = shuffled[rng.permutation(x.shape[0]), i]
            score = float(np.mean(f.predict(shuffled).argmax(axis=1) == y))
            drops[i] += base - score
    drops /= n_repeats
    latency = (time.perf_counter() - t0) * 1e3
    return Explanation("permutation", drops, None, latency, seed=seed)


@dataclass
class ExplainerConfig:
    """Which explainer to run and with what parameters."""

    method: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.method not in EXPLAINER_METHODS:
            raise ValueError(
                f"unknown method {self.method!r}; valid: {', '.join(EXPLAINER_METHODS)}")


def run_explainer(config: ExplainerConfig, f: BlackBox, x: np.ndarray, seed: int,
                  baseline: np.ndarray | None = None, dataset=None) -> Explanation:
    """Uniform dispatch used by the consistency, benchmark and CLI layers."""
    if baseline is None:
        baseline = np.zeros(f.num_features)
    if config.method == "interpretcc":
        if f.model is None or not hasattr(f.model, "explain"):
            raise ValueError(
                "method 'interpretcc' needs a routed or gated model checkpoint")
        return f.model.explain(x)
    if config.method == "shapley_exact":
        return shapley_exact(f, x, baseline, **config.params)
    if config.method == "shapley_sampled":
        params = {"n_permutations": 1000, **config.params}
        return shapley_sampled(f, x, baseline, rng=Rng(seed), **params)
    if config.method == "lime":
        return lime_local(f, x, rng=Rng(seed), **config.params)
    if config.method == "permutation":
        if dataset is None:
            raise ValueError("method 'permutation' needs a labeled dataset")
        return permutation_importance(f, dataset, Rng(seed), **config.params)
    raise AssertionError(config.method)
