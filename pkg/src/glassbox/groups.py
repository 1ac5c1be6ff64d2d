"""Named feature groups: the unit of routing and of explanation.

A group spec is a human-written cover of the feature indices. Overlap is
allowed (a feature may sit in several groups); gaps are not.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class GroupSpecError(Exception):
    pass


@dataclass(frozen=True)
class FeatureGroupSpec:
    names: tuple[str, ...]
    indices: tuple[tuple[int, ...], ...]
    num_features: int

    def __post_init__(self):
        if len(self.names) != len(self.indices):
            raise GroupSpecError("names and index lists differ in length")
        if not self.names:
            raise GroupSpecError("at least one group is required")
        if len(set(self.names)) != len(self.names):
            raise GroupSpecError(f"group names are not unique: {self.names}")
        covered = set()
        for pos, (name, idx) in enumerate(zip(self.names, self.indices)):
            if len(idx) == 0:
                raise GroupSpecError(f"groups[{pos}] ({name!r}) is empty")
            for i in idx:
                if not 0 <= i < self.num_features:
                    raise GroupSpecError(
                        f"groups[{pos}] ({name!r}): index {i} out of range "
                        f"for num_features={self.num_features}")
            covered.update(idx)
        missing = sorted(set(range(self.num_features)) - covered)
        if missing:
            raise GroupSpecError(f"features not covered by any group: {missing}")

    @property
    def num_groups(self) -> int:
        return len(self.names)

    def group_indices(self, g: int) -> np.ndarray:
        return np.asarray(self.indices[g], dtype=np.intp)

    def to_dict(self) -> dict:
        return {"num_features": self.num_features,
                "groups": [{"name": n, "indices": list(map(int, idx))}
                           for n, idx in zip(self.names, self.indices)]}

    @staticmethod
    def from_dict(obj: dict) -> "FeatureGroupSpec":
        try:
            num_features = int(obj["num_features"])
            groups = obj["groups"]
            names = tuple(str(g["name"]) for g in groups)
            indices = tuple(tuple(int(i) for i in g["indices"]) for g in groups)
        except (KeyError, TypeError) as exc:
            raise GroupSpecError(f"malformed group spec: {exc}") from None
        return FeatureGroupSpec(names, indices, num_features)

    @staticmethod
    def contiguous(num_features: int, num_groups: int,
                   prefix: str = "block") -> "FeatureGroupSpec":
        from .data import group_blocks
        blocks = group_blocks(num_features, num_groups)
        return FeatureGroupSpec(
            tuple(f"{prefix}_{i}" for i in range(num_groups)),
            tuple(tuple(map(int, b)) for b in blocks), num_features)


def load_group_spec(path: str | Path) -> FeatureGroupSpec:
    """Parse a group config file. Syntax errors keep json's line/column info."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise GroupSpecError(f"cannot read group spec {path}: {exc}") from None
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise GroupSpecError(
            f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from None
    return FeatureGroupSpec.from_dict(obj)


def save_group_spec(spec: FeatureGroupSpec, path: str | Path) -> None:
    Path(path).write_text(json.dumps(spec.to_dict(), indent=2) + "\n")


def discover_groups(features, num_groups: int) -> FeatureGroupSpec:
    """Interface slot for automated grouping (e.g. correlation clustering).

    Only human-specified groups ship; the routed models treat the group
    spec as given, so a discovery method can be dropped in here without
    touching them.
    """
    raise NotImplementedError(
        "automated group discovery is not implemented; write the groups "
        "by hand or use FeatureGroupSpec.contiguous")
