"""Classifier models: a plain dense MLP baseline and two architectures
whose explanation is read directly off the forward pass.

RoutedExpertsModel routes each input to a subset of human-specified
feature groups; each group's expert network is structurally sliced to
its own features, so inactive features provably cannot influence the
output. FeatureGatingModel is the degenerate case where every group is
a single feature and masked features are imputed with training means.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from . import tensor as T
from .explainers import BlackBox, Explanation
from .gating import INFERENCE_HARD, TRAIN_SOFT, GateConfig, hard_mask, sparsity_penalty
from .groups import FeatureGroupSpec
from .nn import MLP
from .optim import OptimStepError, make_optimizer
from .rng import Rng
from .tensor import Tensor

MODEL_KINDS = ("mlp_blackbox", "interpretcc_moe", "feature_gating")

_WEIGHT_EPS = 1e-12


class RoutingError(Exception):
    pass


def _softmax_np(z: np.ndarray, axis: int = -1) -> np.ndarray:
    shifted = z - z.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


@dataclass
class RoutingDecision:
    """Which groups are active for one input, and the scores behind it."""

    scores: np.ndarray   # (G,) sigmoid scores in [0, 1]
    active: np.ndarray   # (G,) boolean
    mode: str            # train_soft | inference_hard
    fallback: bool = False  # True when argmax rescued an empty active set

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        self.active = np.asarray(self.active, dtype=bool)
        if self.scores.shape != self.active.shape:
            raise ValueError("scores and active must have matching shapes")

    def active_indices(self) -> np.ndarray:
        return np.flatnonzero(self.active)


@dataclass
class PredictResult:
    probabilities: np.ndarray
    decision: RoutingDecision | None
    latency_ms: float


def _check_vector(x, num_features: int, who: str) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != num_features:
        raise T.ShapeError(
            f"{who} expects a length-{num_features} feature vector, got shape {x.shape}")
    return x


def _select_active(scores: np.ndarray, config: GateConfig) -> tuple[np.ndarray, bool]:
    """Inference selection rule: threshold(0.5) or top_k, never empty."""
    n = scores.shape[0]
    if config.selection == "top_k":
        active = np.zeros(n, dtype=bool)
        if config.k == 1:
            # argmax returns the first maximum, same lower-index tie rule
            # as the stable sort below
            active[int(np.argmax(scores))] = True
            return active, False
        # stable sort on negated scores: ties go to the lower group index
        order = np.argsort(-scores, kind="stable")
        active[order[:config.k]] = True
        return active, False
    active = scores >= 0.5
    if not active.any():
        active = np.zeros(n, dtype=bool)
        active[int(np.argmax(scores))] = True
        return active, True
    return active, False


class MLPClassifier:
    """Plain dense classifier; the opaque baseline the explainers probe."""

    kind = "mlp_blackbox"

    def __init__(self, num_features: int, num_classes: int, rng: Rng,
                 hidden: tuple = (16, 16), activation: str = "relu",
                 name: str = "mlp"):
        self.num_features = num_features
        self.num_classes = num_classes
        self.hidden = tuple(int(h) for h in hidden)
        self.activation = activation
        self.net = MLP([num_features, *self.hidden, num_classes], rng,
                       activation=activation, name=name)
        self.checkpoint_id: str | None = None

    def config(self) -> dict:
        return {"kind": self.kind, "num_features": self.num_features,
                "num_classes": self.num_classes, "hidden": list(self.hidden),
                "activation": self.activation}

    @classmethod
    def from_config(cls, cfg: dict) -> "MLPClassifier":
        return cls(cfg["num_features"], cfg["num_classes"], Rng(0),
                   hidden=tuple(cfg["hidden"]), activation=cfg["activation"])

    def params(self) -> list[Tensor]:
        return self.net.params()

    def named_params(self) -> list[tuple[str, Tensor]]:
        return self.net.named_params()

    def named_buffers(self) -> list[tuple[str, np.ndarray]]:
        return []

    def param_count(self) -> int:
        return sum(p.size for p in self.params())

    def forward_train(self, x: Tensor, temperature, rng):
        return self.net.forward(x), None, None

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        if single:
            x = x[None, :]
        probs = _softmax_np(self.net.forward_np(x))
        return probs[0] if single else probs

    def predict(self, x: np.ndarray) -> PredictResult:
        t0 = time.perf_counter()
        x = _check_vector(x, self.num_features, self.kind)
        probs = _softmax_np(self.net.forward_np(x[None, :])[0])
        return PredictResult(probs, None, (time.perf_counter() - t0) * 1e3)

    def blackbox(self, name: str | None = None) -> BlackBox:
        return BlackBox(self.predict_proba, self.num_features, self.num_classes,
                        name=name or self.kind, model=self)


class RoutedExpertsModel:
    """Discriminator-routed mixture over human-specified feature groups.

    The discriminator scores every group from the full (standardized)
    input; experts are MLPs whose input layer admits only their group's
    features. Active experts' logits are combined with scores
    renormalized over the active set.
    """

    kind = "interpretcc_moe"

    def __init__(self, groups: FeatureGroupSpec, num_classes: int, rng: Rng,
                 gate_config: GateConfig | None = None,
                 disc_hidden: tuple = (16,), expert_hidden: tuple = (16, 16),
                 activation: str = "relu",
                 imputation_values: np.ndarray | None = None):
        self.groups = groups
        self.num_features = groups.num_features
        self.num_classes = num_classes
        self.gate_config = gate_config or GateConfig()
        self.disc_hidden = tuple(int(h) for h in disc_hidden)
        self.expert_hidden = tuple(int(h) for h in expert_hidden)
        self.activation = activation
        streams = rng.split(1 + groups.num_groups)
        self.discriminator = MLP(
            [self.num_features, *self.disc_hidden, groups.num_groups],
            streams[0], activation=activation, name="discriminator")
        self.experts = [
            MLP([len(groups.group_indices(g)), *self.expert_hidden, num_classes],
                streams[1 + g], activation=activation, name=f"expert{g}")
            for g in range(groups.num_groups)]
        if imputation_values is None:
            imputation_values = np.zeros(self.num_features)
        self.imputation_values = np.asarray(imputation_values, dtype=np.float64)
        self.checkpoint_id: str | None = None
        self._group_idx = [groups.group_indices(g)
                           for g in range(groups.num_groups)]

    @property
    def num_groups(self) -> int:
        return self.groups.num_groups

    def config(self) -> dict:
        return {"kind": self.kind, "groups": self.groups.to_dict(),
                "num_classes": self.num_classes,
                "gate_config": self.gate_config.to_dict(),
                "disc_hidden": list(self.disc_hidden),
                "expert_hidden": list(self.expert_hidden),
                "activation": self.activation}

    @classmethod
    def from_config(cls, cfg: dict) -> "RoutedExpertsModel":
        return cls(FeatureGroupSpec.from_dict(cfg["groups"]), cfg["num_classes"],
                   Rng(0), gate_config=GateConfig.from_dict(cfg["gate_config"]),
                   disc_hidden=tuple(cfg["disc_hidden"]),
                   expert_hidden=tuple(cfg["expert_hidden"]),
                   activation=cfg["activation"])

    def params(self) -> list[Tensor]:
        out = self.discriminator.params()
        for e in self.experts:
            out.extend(e.params())
        return out

    def named_params(self) -> list[tuple[str, Tensor]]:
        out = self.discriminator.named_params()
        for e in self.experts:
            out.extend(e.named_params())
        return out

    def named_buffers(self) -> list[tuple[str, np.ndarray]]:
        return [("imputation_values", self.imputation_values)]

    def param_count(self) -> int:
        return sum(p.size for p in self.params())

    # -- inference -------------------------------------------------------

    def route(self, x: np.ndarray, mode: str = INFERENCE_HARD) -> RoutingDecision:
        if mode != INFERENCE_HARD:
            raise ValueError(
                "route() is the deterministic inference path; sampled training "
                "masks come from forward_train")
        x = _check_vector(x, self.num_features, "route")
        scores = expit(self.discriminator.forward_np(x[None, :])[0])
        active, fallback = _select_active(scores, self.gate_config)
        return RoutingDecision(scores, active, INFERENCE_HARD, fallback)

    def predict_with_routing(self, x: np.ndarray,
                             decision: RoutingDecision) -> np.ndarray:
        """Combine active experts only. Output is constant in every feature
        outside the active groups (they are never read)."""
        x = _check_vector(x, self.num_features, "predict_with_routing")
        return _softmax_np(self._active_logits(x, decision))

    def _active_logits(self, x: np.ndarray,
                       decision: RoutingDecision) -> np.ndarray:
        active = decision.active_indices()
        if active.size == 0:
            raise RoutingError("decision has no active groups")
        if active.size == 1:
            # s / s is exactly 1.0, so this matches the general path bit
            # for bit while skipping the renormalization.
            g = active[0]
            return self.experts[g].forward_np(x[self._group_idx[g]][None, :])[0]
        weights = decision.scores[active]
        weights = weights / weights.sum()
        logits = np.zeros(self.num_classes)
        for w, g in zip(weights, active):
            logits = logits + w * self.experts[g].forward_np(
                x[self._group_idx[g]][None, :])[0]
        return logits

    def predict(self, x: np.ndarray) -> PredictResult:
        t0 = time.perf_counter()
        decision = self.route(x)
        probs = self.predict_with_routing(x, decision)
        return PredictResult(probs, decision, (time.perf_counter() - t0) * 1e3)

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        """Row loop through the single-instance path, so batched output is
        bit-identical to predict() on each row."""
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 1:
            return self.predict(x).probabilities
        out = np.empty((x.shape[0], self.num_classes))
        for i in range(x.shape[0]):
            out[i] = self.predict_with_routing(x[i], self.route(x[i]))
        return out

    def blackbox(self, name: str | None = None) -> BlackBox:
        return BlackBox(self.predict_proba, self.num_features, self.num_classes,
                        name=name or self.kind, model=self)

    def explain(self, x: np.ndarray) -> Explanation:
        """Attribution read off the routing: active groups carry their
        renormalized score, spread uniformly over their features; every
        inactive feature gets exactly 0. The explanation is a byproduct
        of the forward pass, so its latency is one routed prediction plus
        bookkeeping."""
        t0 = time.perf_counter()
        x = _check_vector(x, self.num_features, "explain")
        decision = self.route(x)
        active = decision.active_indices()
        logits = self._active_logits(x, decision)
        weights = decision.scores[active]
        weights = weights / weights.sum()
        attr = np.zeros(self.num_features)
        groups_out = []
        for w, g in zip(weights, active):
            idx = self._group_idx[g]
            attr[idx] += w / idx.size
            groups_out.append({"name": self.groups.names[g],
                               "score": float(decision.scores[g])})
        return Explanation("interpretcc", attr, int(np.argmax(logits)),
                           (time.perf_counter() - t0) * 1e3,
                           active_groups=groups_out,
                           checkpoint_id=self.checkpoint_id)

    # -- training --------------------------------------------------------

    def forward_train(self, x: Tensor, temperature: float, rng: Rng):
        """Soft-routed forward over all experts with straight-through masks.

        Inactive experts receive exactly zero weight on the forward path
        (so they contribute nothing and get no gradient through their
        logits), while the discriminator still gets routing gradient via
        the relaxed mask.
        """
        disc_logits = self.discriminator.forward(x)
        scores = T.sigmoid(disc_logits)
        mask = hard_mask(scores, temperature, rng, mode=TRAIN_SOFT)
        dead = mask.values.sum(axis=1) == 0.0
        if dead.any():
            rescue = np.zeros_like(mask.values)
            rescue[np.flatnonzero(dead),
                   np.argmax(scores.values[dead], axis=1)] = 1.0
            mask = mask + Tensor(rescue)
        # Weights carry the same score-renormalized values as inference, but
        # the routing gradient flows only through the mask's straight-through
        # path: letting it also flow through the weight values teaches the
        # discriminator to modulate expert confidence with whatever features
        # help, which destabilizes the routing margins.
        weighted = mask * scores.detach()
        denom = T.tsum(weighted, axis=1, keepdims=True) + _WEIGHT_EPS
        w = weighted / denom
        out = None
        for g in range(self.num_groups):
            idx = self.groups.group_indices(g)
            logits_g = self.experts[g].forward(T.take_columns(x, idx))
            term = logits_g * T.take_columns(w, np.array([g]))
            out = term if out is None else out + term
        return out, scores, mask.values


class FeatureGatingModel:
    """Per-feature learned mask; masked features are imputed with the
    training mean before the predictor sees them."""

    kind = "feature_gating"

    def __init__(self, num_features: int, num_classes: int, rng: Rng,
                 gate_config: GateConfig | None = None,
                 gate_hidden: tuple = (16,), predictor_hidden: tuple = (16, 16),
                 activation: str = "relu",
                 imputation_values: np.ndarray | None = None):
        self.num_features = num_features
        self.num_classes = num_classes
        self.gate_config = gate_config or GateConfig()
        self.gate_hidden = tuple(int(h) for h in gate_hidden)
        self.predictor_hidden = tuple(int(h) for h in predictor_hidden)
        self.activation = activation
        streams = rng.split(2)
        self.gate = MLP([num_features, *self.gate_hidden, num_features],
                        streams[0], activation=activation, name="gate")
        self.predictor = MLP([num_features, *self.predictor_hidden, num_classes],
                             streams[1], activation=activation, name="predictor")
        if imputation_values is None:
            imputation_values = np.zeros(num_features)
        self.imputation_values = np.asarray(imputation_values, dtype=np.float64)
        self.checkpoint_id: str | None = None

    @property
    def num_groups(self) -> int:
        return self.num_features

    def config(self) -> dict:
        return {"kind": self.kind, "num_features": self.num_features,
                "num_classes": self.num_classes,
                "gate_config": self.gate_config.to_dict(),
                "gate_hidden": list(self.gate_hidden),
                "predictor_hidden": list(self.predictor_hidden),
                "activation": self.activation}

    @classmethod
    def from_config(cls, cfg: dict) -> "FeatureGatingModel":
        return cls(cfg["num_features"], cfg["num_classes"], Rng(0),
                   gate_config=GateConfig.from_dict(cfg["gate_config"]),
                   gate_hidden=tuple(cfg["gate_hidden"]),
                   predictor_hidden=tuple(cfg["predictor_hidden"]),
                   activation=cfg["activation"])

    def params(self) -> list[Tensor]:
        return self.gate.params() + self.predictor.params()

    def named_params(self) -> list[tuple[str, Tensor]]:
        return self.gate.named_params() + self.predictor.named_params()

    def named_buffers(self) -> list[tuple[str, np.ndarray]]:
        return [("imputation_values", self.imputation_values)]

    def param_count(self) -> int:
        return sum(p.size for p in self.params())

    def route(self, x: np.ndarray, mode: str = INFERENCE_HARD) -> RoutingDecision:
        if mode != INFERENCE_HARD:
            raise ValueError(
                "route() is the deterministic inference path; sampled training "
                "masks come from forward_train")
        x = _check_vector(x, self.num_features, "route")
        scores = expit(self.gate.forward_np(x[None, :])[0])
        active, fallback = _select_active(scores, self.gate_config)
        return RoutingDecision(scores, active, INFERENCE_HARD, fallback)

    def predict_with_routing(self, x: np.ndarray,
                             decision: RoutingDecision) -> np.ndarray:
        x = _check_vector(x, self.num_features, "predict_with_routing")
        if not decision.active.any():
            raise RoutingError("decision has no active features")
        masked = np.where(decision.active, x, self.imputation_values)
        return _softmax_np(self.predictor.forward_np(masked[None, :])[0])

    def predict(self, x: np.ndarray) -> PredictResult:
        t0 = time.perf_counter()
        decision = self.route(x)
        probs = self.predict_with_routing(x, decision)
        return PredictResult(probs, decision, (time.perf_counter() - t0) * 1e3)

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 1:
            return self.predict(x).probabilities
        out = np.empty((x.shape[0], self.num_classes))
        for i in range(x.shape[0]):
            out[i] = self.predict_with_routing(x[i], self.route(x[i]))
        return out

    def blackbox(self, name: str | None = None) -> BlackBox:
        return BlackBox(self.predict_proba, self.num_features, self.num_classes,
                        name=name or self.kind, model=self)

    def explain(self, x: np.ndarray) -> Explanation:
        res = self.predict(x)
        decision = res.decision
        active = decision.active_indices()
        weights = decision.scores[active]
        weights = weights / weights.sum()
        attr = np.zeros(self.num_features)
        attr[active] = weights
        groups_out = [{"name": f"f{i}", "score": float(decision.scores[i])}
                      for i in active]
        return Explanation("interpretcc", attr,
                           int(np.argmax(res.probabilities)), res.latency_ms,
                           active_groups=groups_out,
                           checkpoint_id=self.checkpoint_id)

    def forward_train(self, x: Tensor, temperature: float, rng: Rng):
        gate_logits = self.gate.forward(x)
        scores = T.sigmoid(gate_logits)
        mask = hard_mask(scores, temperature, rng, mode=TRAIN_SOFT)
        dead = mask.values.sum(axis=1) == 0.0
        if dead.any():
            rescue = np.zeros_like(mask.values)
            rescue[np.flatnonzero(dead),
                   np.argmax(scores.values[dead], axis=1)] = 1.0
            mask = mask + Tensor(rescue)
        imput = Tensor(self.imputation_values)
        masked = mask * x + (1.0 - mask) * imput
        out = self.predictor.forward(masked)
        return out, scores, mask.values


@dataclass
class TrainingTrace:
    """Per-epoch loss, training accuracy, mean active-group count under
    inference selection rules, and the annealed temperature."""

    loss: np.ndarray = field(default_factory=lambda: np.empty(0))
    accuracy: np.ndarray = field(default_factory=lambda: np.empty(0))
    active_count: np.ndarray = field(default_factory=lambda: np.empty(0))
    temperature: np.ndarray = field(default_factory=lambda: np.empty(0))

    @property
    def n_epochs(self) -> int:
        return len(self.loss)

    def to_dict(self) -> dict:
        return {"loss": [float(v) for v in self.loss],
                "accuracy": [float(v) for v in self.accuracy],
                "active_count": [float(v) for v in self.active_count],
                "temperature": [float(v) for v in self.temperature]}


class TrainingDiverged(RuntimeError):
    """Loss or gradients became non-finite; parameters were restored to
    the last epoch that completed cleanly."""

    def __init__(self, message: str, last_good_epoch: int, trace: TrainingTrace):
        super().__init__(message)
        self.last_good_epoch = last_good_epoch
        self.trace = trace


def _inference_active_count(scores: np.ndarray, config: GateConfig) -> float:
    """Mean number of groups the inference rule would activate, per row."""
    if config.selection == "top_k":
        return float(config.k)
    counts = np.maximum((scores >= 0.5).sum(axis=1), 1)  # argmax fallback
    return float(counts.mean())


def train(model, dataset, epochs: int, gate_config: GateConfig | None = None,
          rng: Rng | None = None, learning_rate: float = 0.01,
          optimizer: str = "adam",
          example_weights: np.ndarray | None = None) -> TrainingTrace:
    """Full-batch training; one step per epoch, deterministic given rng.

    Gated models minimize cross-entropy plus the sparsity penalty with
    the temperature annealed per epoch; the plain MLP ignores gating.
    Optional per-example weights (any non-negative vector, normalized
    here) let callers over-sample chosen examples without copying rows.
    """
    if epochs < 0:
        raise ValueError("epochs must be non-negative")
    if rng is None:
        rng = Rng(0)
    gated = model.kind != "mlp_blackbox"
    if gate_config is not None and gated:
        model.gate_config = gate_config
    cfg = model.gate_config if gated else None
    weights = None
    if example_weights is not None:
        weights = np.asarray(example_weights, dtype=np.float64)
        if weights.shape != (dataset.n,):
            raise ValueError(
                f"example_weights shape {weights.shape} != ({dataset.n},)")
        if np.any(weights < 0) or weights.sum() <= 0:
            raise ValueError("example_weights must be non-negative, sum > 0")
        weights = weights / weights.sum()
    x = Tensor(dataset.features)
    y = dataset.labels
    opt = make_optimizer(optimizer, model.params(), learning_rate)
    trace = TrainingTrace(np.empty(epochs), np.empty(epochs),
                          np.full(epochs, np.nan), np.full(epochs, np.nan))
    snapshot = [p.values.copy() for p in model.params()]

    def restore():
        for p, saved in zip(model.params(), snapshot):
            p.values[...] = saved
            p.zero_grad()

    for epoch in range(epochs):
        tau = cfg.temperature_at(epoch) if cfg else None
        try:
            logits, scores, _ = model.forward_train(x, tau, rng)
            loss = T.cross_entropy_with_logits(logits, y, weights=weights)
            if gated:
                loss = loss + sparsity_penalty(scores, cfg.sparsity_coefficient)
        except T.NonFiniteError as err:
            # the op-level check fires before the loss node exists, so a
            # blown-up forward lands here rather than in the isfinite gate
            restore()
            raise TrainingDiverged(
                f"{err} at epoch {epoch}; restored epoch {epoch - 1}",
                epoch - 1, _truncate(trace, epoch)) from err
        loss_value = loss.item()
        if not np.isfinite(loss_value):
            restore()
            raise TrainingDiverged(
                f"loss became non-finite at epoch {epoch}; restored epoch {epoch - 1}",
                epoch - 1, _truncate(trace, epoch))
        trace.loss[epoch] = loss_value
        trace.accuracy[epoch] = float(
            np.mean(np.argmax(logits.values, axis=1) == y))
        if gated:
            trace.active_count[epoch] = _inference_active_count(scores.values, cfg)
            trace.temperature[epoch] = tau
        loss.backward()
        try:
            opt.step()
        except OptimStepError as err:
            restore()
            raise TrainingDiverged(
                f"{err} at epoch {epoch}; restored epoch {epoch - 1}",
                epoch - 1, _truncate(trace, epoch)) from err
        snapshot = [p.values.copy() for p in model.params()]
    return trace


def _truncate(trace: TrainingTrace, n: int) -> TrainingTrace:
    n = max(n, 0)
    return TrainingTrace(trace.loss[:n].copy(), trace.accuracy[:n].copy(),
                         trace.active_count[:n].copy(),
                         trace.temperature[:n].copy())


def matched_hidden_width(num_features: int, num_classes: int,
                         target_params: int, depth: int = 3) -> int:
    """Hidden width H so an MLP [d, H*depth, C] has about target_params.

    Used to build the plain dense baseline of comparable parameter count
    for latency comparisons; depth 3 mirrors the routed path's serial
    depth (discriminator hidden layer + two expert hidden layers).
    """
    a = depth - 1
    b = num_features + num_classes + depth
    c = num_classes - target_params
    if a == 0:
        h = -c / b
    else:
        h = (-b + np.sqrt(b * b - 4 * a * c)) / (2 * a)
    return max(1, int(round(h)))
