"""Datasets: synthetic generators with planted ground truth, CSV I/O, splits.

Real explanation accuracy cannot be scored without knowing which features
actually drive the label, so the generators here plant that ground truth
and record it on the dataset (per-example relevant group, per-example
category tags, generating-rule weights in ``meta``).

Generator kinds:

* ``planted_linear``: label = sign(w . x over a sparse support), weights
  geometric so the top feature is unambiguous.
* ``switch_moe``: a dedicated switch feature (the last column) selects
  which group's linear rule produces the label; the selected group is
  recorded per example.
* ``multi_skill``: half the examples are an easy wide-margin linear
  sub-task, half a harder sign-product sub-task; category tags name the
  sub-task, so probe suites and targeted resampling can address them.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.stats import norm

from .rng import Rng

SYNTHETIC_KINDS = ("planted_linear", "switch_moe", "multi_skill")


@dataclass
class SyntheticSpec:
    kind: str
    num_features: int = 12
    num_groups: int = 2
    n_samples: int = 1000
    noise_std: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in SYNTHETIC_KINDS:
            raise ValueError(
                f"unknown synthetic kind {self.kind!r}; expected one of {SYNTHETIC_KINDS}")
        if self.num_features <= 0 or self.n_samples <= 0 or self.num_groups <= 0:
            raise ValueError("num_features, num_groups and n_samples must be positive")
        if self.noise_std < 0:
            raise ValueError("noise_std must be non-negative")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "num_features": self.num_features,
                "num_groups": self.num_groups, "n_samples": self.n_samples,
                "noise_std": self.noise_std, "seed": self.seed}


@dataclass
class Standardization:
    mean: np.ndarray
    std: np.ndarray
    constant: np.ndarray  # flags features whose std was ~0 and got pinned to 1


@dataclass
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    relevant_groups: np.ndarray | None = None
    categories: np.ndarray | None = None
    stats: Standardization | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels)
        n = self.features.shape[0]
        for name in ("labels", "relevant_groups", "categories"):
            arr = getattr(self, name)
            if arr is not None and len(arr) != n:
                raise ValueError(f"{name} has {len(arr)} rows, features have {n}")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def num_features(self) -> int:
        return self.features.shape[1]

    @property
    def num_classes(self) -> int:
        return int(self.labels.max()) + 1 if self.n else 0

    def subset(self, idx: np.ndarray) -> "Dataset":
        return Dataset(
            self.features[idx], self.labels[idx],
            None if self.relevant_groups is None else self.relevant_groups[idx],
            None if self.categories is None else self.categories[idx],
            self.stats, dict(self.meta))


def group_blocks(num_features: int, num_groups: int) -> list[np.ndarray]:
    """Contiguous, nearly equal index blocks covering all features."""
    bounds = np.linspace(0, num_features, num_groups + 1).round().astype(int)
    blocks = [np.arange(a, b) for a, b in zip(bounds[:-1], bounds[1:])]
    if any(len(b) == 0 for b in blocks):
        raise ValueError(f"cannot split {num_features} features into {num_groups} groups")
    return blocks


# -- generators ------------------------------------------------------------------


def _gen_planted_linear(spec: SyntheticSpec, rng: Rng) -> Dataset:
    d = spec.num_features
    x = rng.normal((spec.n_samples, d))
    support = np.arange(max(1, d // 4))
    w = np.zeros(d)
    w[support] = 2.0 ** -np.arange(len(support))  # geometric, feature 0 dominant
    score = x @ w + rng.normal(spec.n_samples, spec.noise_std)
    labels = (score > 0).astype(np.int64)
    return Dataset(x, labels, meta={
        "weights": w, "support": support, "spec": spec.to_dict()})


def _gen_switch_moe(spec: SyntheticSpec, rng: Rng) -> Dataset:
    d, g = spec.num_features, spec.num_groups
    blocks = group_blocks(d, g)
    switch = d - 1  # last feature, so zero-attribution tie-breaks never hit it
    x = rng.normal((spec.n_samples, d))
    # Equiprobable bins of the (standard normal) switch value pick the group;
    # for two groups this is a plain sign threshold at zero.
    thresholds = norm.ppf(np.linspace(0.0, 1.0, g + 1)[1:-1])
    chosen = np.searchsorted(thresholds, x[:, switch], side="left")
    rule_weights = np.zeros((g, d))
    for gi, block in enumerate(blocks):
        idx = block[block != switch]
        w = rng.normal(len(idx))
        rule_weights[gi, idx] = w / np.linalg.norm(w)
    score = np.einsum("nd,nd->n", x, rule_weights[chosen])
    score += rng.normal(spec.n_samples, spec.noise_std)
    labels = (score > 0).astype(np.int64)
    return Dataset(x, labels, relevant_groups=chosen, meta={
        "rule_weights": rule_weights, "switch_feature": switch,
        "thresholds": thresholds, "blocks": blocks, "spec": spec.to_dict()})


def _gen_multi_skill(spec: SyntheticSpec, rng: Rng) -> Dataset:
    d = spec.num_features
    if d < 3:
        raise ValueError("multi_skill needs at least 3 features")
    n = spec.n_samples
    x = rng.normal((n, d))
    hard = rng.uniform(n) < 0.5
    # Easy sub-task: wide-margin linear rule on feature 0.
    x[:, 0] = np.sign(x[:, 0]) * (np.abs(x[:, 0]) + 0.5)
    score = np.where(hard, x[:, 1] * x[:, 2], x[:, 0])
    score = score + rng.normal(n, spec.noise_std)
    labels = (score > 0).astype(np.int64)
    categories = np.where(hard, "hard", "easy")
    return Dataset(x, labels, categories=categories, meta={
        "easy_feature": 0, "hard_features": (1, 2), "spec": spec.to_dict()})


_GENERATORS = {
    "planted_linear": _gen_planted_linear,
    "switch_moe": _gen_switch_moe,
    "multi_skill": _gen_multi_skill,
}


def gen_synthetic(spec: SyntheticSpec) -> Dataset:
    """Generate a dataset; pure function of the SyntheticSpec (seed included)."""
    return _GENERATORS[spec.kind](spec, Rng(spec.seed))


# -- CSV ingestion -----------------------------------------------------------------


class CsvFormatError(Exception):
    pass


def load_csv(path: str | Path, label_column: str = "label") -> Dataset:
    """Read a rectangular numeric CSV with header into a Dataset.

    Bad cells are rejected with their data-row number (1-based, header
    excluded) and column name.
    """
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CsvFormatError(f"{path}: empty file") from None
        if label_column not in header:
            raise CsvFormatError(
                f"{path}: label column {label_column!r} not in header {header}")
        label_idx = header.index(label_column)
        rows = []
        for rownum, row in enumerate(reader, start=1):
            if len(row) != len(header):
                raise CsvFormatError(
                    f"{path}: row {rownum} has {len(row)} cells, header has {len(header)}")
            parsed = []
            for col, cell in zip(header, row):
                try:
                    parsed.append(float(cell))
                except ValueError:
                    raise CsvFormatError(
                        f"{path}: row {rownum}, column {col!r}: "
                        f"non-numeric value {cell!r}") from None
            rows.append(parsed)
    if not rows:
        raise CsvFormatError(f"{path}: no data rows")
    mat = np.asarray(rows, dtype=np.float64)
    features = np.delete(mat, label_idx, axis=1)
    labels = mat[:, label_idx].astype(np.int64)
    names = [h for i, h in enumerate(header) if i != label_idx]
    return Dataset(features, labels, meta={"feature_names": names, "path": str(path)})


def save_csv(dataset: Dataset, path: str | Path, label_column: str = "label") -> None:
    path = Path(path)
    names = dataset.meta.get("feature_names")
    if not names or len(names) != dataset.num_features:
        names = [f"f{i}" for i in range(dataset.num_features)]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(names) + [label_column])
        for x, y in zip(dataset.features, dataset.labels):
            writer.writerow([repr(float(v)) for v in x] + [int(y)])


# -- standardization and splitting ----------------------------------------------


def standardize(dataset: Dataset) -> tuple[Dataset, Standardization]:
    """Zero-mean unit-std features; constant columns are flagged, std pinned to 1."""
    mean = dataset.features.mean(axis=0)
    std = dataset.features.std(axis=0)
    constant = std < 1e-12
    std = np.where(constant, 1.0, std)
    stats = Standardization(mean, std, constant)
    return apply_standardization(dataset, stats), stats


def apply_standardization(dataset: Dataset, stats: Standardization) -> Dataset:
    out = replace(dataset, features=(dataset.features - stats.mean) / stats.std)
    out.stats = stats
    return out


def split(dataset: Dataset, fractions: tuple[float, float], seed: int
          ) -> tuple[Dataset, Dataset]:
    """Deterministic label-stratified split into (train, test)."""
    if abs(sum(fractions) - 1.0) > 1e-9 or len(fractions) != 2:
        raise ValueError(f"fractions must be two values summing to 1, got {fractions}")
    rng = Rng(seed)
    train_idx, test_idx = [], []
    for label in np.unique(dataset.labels):
        pool = np.flatnonzero(dataset.labels == label)
        pool = pool[rng.permutation(len(pool))]
        n_train = int(round(fractions[0] * len(pool)))
        train_idx.extend(pool[:n_train])
        test_idx.extend(pool[n_train:])
    if not train_idx or not test_idx:
        raise ValueError(
            f"split produced an empty side (fractions={fractions}, n={dataset.n})")
    return dataset.subset(np.sort(train_idx)), dataset.subset(np.sort(test_idx))


def standardize_pair(train: Dataset, test: Dataset
                     ) -> tuple[Dataset, Dataset, Standardization]:
    """Standardize train and test with statistics from the train split only."""
    train_std, stats = standardize(train)
    return train_std, apply_standardization(test, stats), stats
