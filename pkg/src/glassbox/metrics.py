"""Measurement suite for explanations: prediction-gap fidelity,
inter-method disagreement, cross-seed consistency, and latency.

Attributions are ranked and normalized on absolute values throughout;
signed variants are out of scope. All comparisons are symmetric and
scale-invariant under positive rescaling of the attribution vectors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .explainers import BlackBox, ExplainerConfig, Explanation, run_explainer

LN2 = float(np.log(2.0))
_JS_EPS = 1e-12

PGI = "important"
PGU = "unimportant"


def _abs_rank(attributions: np.ndarray) -> np.ndarray:
    """Feature indices from most to least important, ties to lower index."""
    a = np.abs(attributions)
    # lexsort: last key is primary. Stable, so equal magnitudes keep index order.
    return np.lexsort((np.arange(a.size), -a))


def _check_same_dim(e1: Explanation, e2: Explanation) -> int:
    d1, d2 = e1.attributions.size, e2.attributions.size
    if d1 != d2:
        raise ValueError(f"explanations have {d1} and {d2} features")
    return d1


def rank_agreement(e1: Explanation, e2: Explanation, k: int) -> float:
    """|top-k(e1) ∩ top-k(e2)| / k on |attribution| ordering."""
    d = _check_same_dim(e1, e2)
    if not 1 <= k <= d:
        raise ValueError(f"k must be in [1, {d}], got {k}")
    top1 = set(_abs_rank(e1.attributions)[:k].tolist())
    top2 = set(_abs_rank(e2.attributions)[:k].tolist())
    return len(top1 & top2) / k


def js_distance(e1: Explanation, e2: Explanation) -> float:
    """Jensen-Shannon divergence (natural log) between the normalized
    |attribution| distributions; in [0, ln 2]."""
    _check_same_dim(e1, e2)
    p = np.abs(e1.attributions) + _JS_EPS
    q = np.abs(e2.attributions) + _JS_EPS
    p = p / p.sum()
    q = q / q.sum()
    m = 0.5 * (p + q)
    js = 0.5 * np.sum(p * np.log(p / m)) + 0.5 * np.sum(q * np.log(q / m))
    return float(max(js, 0.0))  # clamp -1e-17 rounding residue


def prediction_gap(f: BlackBox, x: np.ndarray, explanation: Explanation,
                   k: int, direction: str,
                   baseline: np.ndarray | None = None) -> float:
    """Change in target-class probability when the k most (PGI) or least
    (PGU) attributed features are imputed to the baseline.

    A faithful explanation has large gaps for important features and
    small gaps for unimportant ones, so PGI ≥ PGU is the direction check.
    """
    if direction not in (PGI, PGU):
        raise ValueError(f"direction must be {PGI!r} or {PGU!r}, got {direction!r}")
    x = np.asarray(x, dtype=np.float64)
    d = f.num_features
    if not 0 <= k <= d:
        raise ValueError(f"k must be in [0, {d}], got {k}")
    if baseline is None:
        baseline = np.zeros(d)
    a = explanation.attributions
    # Both directions break ties toward the lower feature index; reversing
    # the PGI order would silently prefer high indices among ties.
    if direction == PGI:
        order = _abs_rank(a)
    else:
        order = np.lexsort((np.arange(a.size), np.abs(a)))
    chosen = order[:k]
    perturbed = x.copy()
    perturbed[chosen] = baseline[chosen]
    target = explanation.target_class
    if target is None:
        target = f.argmax_class(x)
    return float(abs(f.predict(x)[target] - f.predict(perturbed)[target]))


@dataclass
class DisagreementMatrix:
    """Pairwise metric values between explanations of one instance."""

    methods: list[str]
    values: np.ndarray
    metric_name: str
    k: int | None

    def mean_off_diagonal(self) -> float:
        n = len(self.methods)
        mask = ~np.eye(n, dtype=bool)
        return float(self.values[mask].mean())

    def to_dict(self) -> dict:
        return {"methods": self.methods, "metric": self.metric_name,
                "k": self.k, "values": [[float(v) for v in row]
                                        for row in self.values]}


def disagreement_matrix(explanations: list[Explanation],
                        metric: str = "rank_agreement",
                        k: int = 5) -> DisagreementMatrix:
    """All pairwise agreements/distances among explanations of the same
    instance. Global explanations (instance_id None) may mix with local
    ones; two different non-None instance ids are an error."""
    if len(explanations) < 2:
        raise ValueError("need at least two explanations")
    ids = {e.instance_id for e in explanations if e.instance_id is not None}
    if len(ids) > 1:
        raise ValueError(f"explanations cover different instances: {sorted(ids)}")
    if metric == "rank_agreement":
        pair, diag = (lambda a, b: rank_agreement(a, b, k)), 1.0
    elif metric == "js_distance":
        pair, diag, k = js_distance, 0.0, None
    else:
        raise ValueError(f"unknown metric {metric!r}")
    n = len(explanations)
    values = np.full((n, n), diag)
    for i in range(n):
        for j in range(i + 1, n):
            values[i, j] = values[j, i] = pair(explanations[i], explanations[j])
    return DisagreementMatrix([e.method for e in explanations], values,
                              metric, k)


@dataclass
class ConsistencyReport:
    """Pairwise rank agreements of one explainer re-run across seeds."""

    method: str
    n_seeds: int
    pairwise: np.ndarray
    k: int

    @property
    def mean(self) -> float:
        return float(self.pairwise.mean())

    @property
    def min(self) -> float:
        return float(self.pairwise.min())

    def to_dict(self) -> dict:
        return {"method": self.method, "n_seeds": self.n_seeds, "k": self.k,
                "pairwise": [float(v) for v in self.pairwise],
                "mean": self.mean, "min": self.min}


def consistency_across_seeds(config: ExplainerConfig, f: BlackBox,
                             x: np.ndarray, n_seeds: int, k: int = 5,
                             baseline: np.ndarray | None = None,
                             dataset=None) -> ConsistencyReport:
    """Re-run one explainer with seeds 0..n_seeds-1 on a fixed instance."""
    if n_seeds < 2:
        raise ValueError("need at least 2 seeds")
    runs = [run_explainer(config, f, x, seed, baseline=baseline, dataset=dataset)
            for seed in range(n_seeds)]
    pairs = [rank_agreement(runs[i], runs[j], k)
             for i in range(n_seeds) for j in range(i + 1, n_seeds)]
    return ConsistencyReport(config.method, n_seeds, np.array(pairs), k)


@dataclass
class LatencyStats:
    method: str
    n_instances: int
    median_ms: float
    p95_ms: float
    mean_ms: float

    def to_dict(self) -> dict:
        return {"method": self.method, "n_instances": self.n_instances,
                "median_ms": self.median_ms, "p95_ms": self.p95_ms,
                "mean_ms": self.mean_ms}


def _latency_stats(method: str, samples_ms: list[float]) -> LatencyStats:
    arr = np.asarray(samples_ms)
    return LatencyStats(method, arr.size, float(np.median(arr)),
                        float(np.percentile(arr, 95)), float(arr.mean()))


def latency_profile(config: ExplainerConfig, f: BlackBox,
                    instances: np.ndarray,
                    baseline: np.ndarray | None = None,
                    dataset=None, seed: int = 0) -> LatencyStats:
    """Per-instance wall-clock of one explainer; needs ≥ 10 instances for
    a meaningful median/p95."""
    instances = np.atleast_2d(np.asarray(instances, dtype=np.float64))
    if instances.shape[0] < 10:
        raise ValueError(f"need at least 10 instances, got {instances.shape[0]}")
    samples = [run_explainer(config, f, row, seed, baseline=baseline,
                             dataset=dataset).latency_ms
               for row in instances]
    return _latency_stats(config.method, samples)


def forward_latency(model, instances: np.ndarray) -> LatencyStats:
    """Per-instance wall-clock of the model's own predict path."""
    instances = np.atleast_2d(np.asarray(instances, dtype=np.float64))
    if instances.shape[0] < 10:
        raise ValueError(f"need at least 10 instances, got {instances.shape[0]}")
    samples = [model.predict(row).latency_ms for row in instances]
    return _latency_stats(f"{model.kind}_forward", samples)
