"""Probe-based training diagnostics.

A probe is a small labeled slice that isolates one capability; a suite
of probes evaluated against a sequence of checkpoints turns a training
run into a per-capability timeline instead of a single loss curve. On
top of that sit three tools: diffs between two reports (what was gained
or lost), targeted resampling (upweight examples from categories the
model is failing), and a timeline report with acquisition steps.
"""

from __future__ import annotations

import csv
import io
import json
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .checkpoints import Checkpoint, restore_model, serialize_model, checkpoint_id_of
from .data import Dataset
from .tensor import ShapeError

PASS_THRESHOLD = 0.8
DELTA_THRESHOLD = 0.05


class ProbeError(Exception):
    pass


@dataclass
class Probe:
    name: str
    features: np.ndarray
    labels: np.ndarray
    metric: str = "accuracy"

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2 or self.features.shape[0] == 0:
            raise ProbeError(f"probe {self.name!r} needs a non-empty 2-d feature array")
        if self.labels.shape != (self.features.shape[0],):
            raise ProbeError(f"probe {self.name!r}: labels do not match rows")
        if self.metric != "accuracy":
            raise ProbeError(f"probe {self.name!r}: unsupported metric {self.metric!r}")


@dataclass
class ProbeSuite:
    probes: list[Probe]

    def __post_init__(self):
        if not self.probes:
            raise ProbeError("a probe suite needs at least one probe")
        names = [p.name for p in self.probes]
        if len(set(names)) != len(names):
            raise ProbeError(f"duplicate probe names: {sorted(names)}")

    def names(self) -> list[str]:
        return [p.name for p in self.probes]

    @staticmethod
    def from_categories(dataset: Dataset) -> "ProbeSuite":
        """One probe per category tag, in sorted tag order."""
        if dataset.categories is None:
            raise ProbeError("dataset has no category tags to build probes from")
        cats = np.asarray(dataset.categories)
        probes = []
        for tag in sorted(set(cats.tolist())):
            rows = cats == tag
            probes.append(Probe(str(tag), dataset.features[rows], dataset.labels[rows]))
        return ProbeSuite(probes)

    @staticmethod
    def load(path: str | Path) -> "ProbeSuite":
        spec = json.loads(Path(path).read_text())
        probes = [Probe(p["name"], np.asarray(p["features"]),
                        np.asarray(p["labels"]), p.get("metric", "accuracy"))
                  for p in spec["probes"]]
        return ProbeSuite(probes)

    def save(self, path: str | Path) -> None:
        spec = {"probes": [{"name": p.name,
                            "features": p.features.tolist(),
                            "labels": p.labels.tolist(),
                            "metric": p.metric} for p in self.probes]}
        Path(path).write_text(json.dumps(spec))


@dataclass
class ProbeReport:
    checkpoint_id: str
    step: int
    scores: dict[str, float]
    wall_clock_s: float

    def to_dict(self) -> dict:
        return {"checkpoint_id": self.checkpoint_id, "step": self.step,
                "scores": dict(self.scores), "wall_clock_s": self.wall_clock_s}

    def canonical_bytes(self) -> bytes:
        """Deterministic serialization; wall clock is timing, not content."""
        payload = {"checkpoint_id": self.checkpoint_id, "step": self.step,
                   "scores": self.scores}
        return json.dumps(payload, sort_keys=True, separators=(",", ":")).encode()


def evaluate_snapshot(model_or_checkpoint, suite: ProbeSuite,
                      step: int | None = None) -> ProbeReport:
    """Score every probe in the suite against one model state.

    Accepts a live model or a Checkpoint; scores are plain accuracy in
    [0, 1] and the evaluation is deterministic for a fixed state.
    """
    if isinstance(model_or_checkpoint, Checkpoint):
        ckpt = model_or_checkpoint
        model = restore_model_from_checkpoint(ckpt)
        cid = ckpt.checkpoint_id
        if step is None:
            step = ckpt.step
    else:
        model = model_or_checkpoint
        cid = getattr(model, "checkpoint_id", None) or checkpoint_id_of(
            serialize_model(model))
        if step is None:
            step = -1
    start = time.perf_counter()
    scores: dict[str, float] = {}
    for probe in suite.probes:
        if probe.features.shape[1] != model.num_features:
            raise ShapeError(
                f"probe {probe.name!r} has {probe.features.shape[1]} features, "
                f"model expects {model.num_features}")
        preds = np.argmax(model.predict_proba(probe.features), axis=1)
        scores[probe.name] = float(np.mean(preds == probe.labels))
    wall = time.perf_counter() - start
    return ProbeReport(cid, int(step), scores, wall)


def restore_model_from_checkpoint(ckpt: Checkpoint):
    from .checkpoints import build_model, _model_entries
    model = build_model(ckpt.config)
    for (name, target), (_, stored) in zip(_model_entries(model), ckpt.arrays):
        target[...] = stored
    model.checkpoint_id = ckpt.checkpoint_id
    return model


@dataclass
class DiagnosticDiff:
    from_step: int
    to_step: int
    deltas: dict[str, float]
    gained: list[str]
    lost: list[str]
    stable: list[str]
    threshold: float = DELTA_THRESHOLD

    def to_dict(self) -> dict:
        return {"from_step": self.from_step, "to_step": self.to_step,
                "deltas": dict(self.deltas), "gained": list(self.gained),
                "lost": list(self.lost), "stable": list(self.stable),
                "threshold": self.threshold}


def diff_diagnostics(report_from: ProbeReport, report_to: ProbeReport,
                     threshold: float = DELTA_THRESHOLD) -> DiagnosticDiff:
    """Per-probe score deltas between two reports over the same suite.

    delta = to - from, exactly. Probes above +threshold are gained,
    below -threshold lost, the rest stable, so swapping the arguments
    negates every delta and swaps the gained and lost sets.
    """
    if set(report_from.scores) != set(report_to.scores):
        raise ProbeError(
            "reports cover different probe suites: "
            f"{sorted(report_from.scores)} vs {sorted(report_to.scores)}")
    deltas, gained, lost, stable = {}, [], [], []
    for name in sorted(report_from.scores):
        d = report_to.scores[name] - report_from.scores[name]
        deltas[name] = d
        if d > threshold:
            gained.append(name)
        elif d < -threshold:
            lost.append(name)
        else:
            stable.append(name)
    return DiagnosticDiff(report_from.step, report_to.step,
                          deltas, gained, lost, stable, threshold)


def targeted_resample(dataset: Dataset, report: ProbeReport,
                      boost_factor: float,
                      pass_threshold: float = PASS_THRESHOLD) -> np.ndarray:
    """Example weights that upweight categories the report is failing.

    Rows tagged with a category whose probe score is below the pass
    threshold get their weight multiplied by boost_factor; the vector is
    then renormalized to sum to 1. No weight is ever zeroed, so passing
    categories keep contributing. Feed the result to train() as
    example_weights.
    """
    if dataset.categories is None:
        raise ProbeError(
            "dataset has no category tags; tag examples with the probe "
            "category they belong to before resampling")
    if boost_factor < 1.0:
        raise ValueError(f"boost_factor must be >= 1, got {boost_factor}")
    cats = np.asarray(dataset.categories)
    weights = np.ones(dataset.n, dtype=np.float64)
    for name, score in report.scores.items():
        if score < pass_threshold:
            weights[cats == name] *= boost_factor
    total = weights.sum()
    return weights / total


@dataclass
class Timeline:
    steps: list[int]
    series: dict[str, list[float]]
    acquisition: dict[str, int | None]
    threshold: float = PASS_THRESHOLD
    checkpoint_ids: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"steps": list(self.steps),
                "series": {k: list(v) for k, v in self.series.items()},
                "acquisition": dict(self.acquisition),
                "threshold": self.threshold,
                "checkpoint_ids": list(self.checkpoint_ids)}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["step", "probe", "score"])
        for name in sorted(self.series):
            for step, score in zip(self.steps, self.series[name]):
                writer.writerow([step, name, repr(score)])
        return buf.getvalue()


def timeline_report(reports: list[ProbeReport],
                    threshold: float = PASS_THRESHOLD) -> Timeline:
    """Stitch per-checkpoint reports into per-probe score trajectories.

    Reports are ordered by step (out-of-order input is sorted with a
    warning); the acquisition step of a probe is the first step at which
    its score reaches the threshold, or None if it never does.
    """
    if len(reports) < 2:
        raise ProbeError("a timeline needs at least two reports")
    names = set(reports[0].scores)
    for r in reports[1:]:
        if set(r.scores) != names:
            raise ProbeError("reports cover different probe suites")
    steps = [r.step for r in reports]
    if steps != sorted(steps):
        warnings.warn("reports were not ordered by step; sorting", stacklevel=2)
        reports = sorted(reports, key=lambda r: r.step)
        steps = [r.step for r in reports]
    series = {name: [r.scores[name] for r in reports] for name in sorted(names)}
    acquisition: dict[str, int | None] = {}
    for name, scores in series.items():
        hit = next((steps[i] for i, s in enumerate(scores) if s >= threshold), None)
        acquisition[name] = hit
    return Timeline(steps, series, acquisition, threshold,
                    [r.checkpoint_id for r in reports])
