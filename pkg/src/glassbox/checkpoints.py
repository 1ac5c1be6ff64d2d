"""Content-addressed model checkpoints.

Binary layout: an 8-byte magic, a length-prefixed canonical JSON header
(format version, model config, array names and shapes), then one flat
little-endian float64 block with every parameter and buffer in header
order. Text floats would lose bits; raw f64 makes the round-trip exact,
so the sha256 of the bytes is a stable identity for the model state.

The training step is deliberately not part of the hashed content: two
snapshots with identical weights and config deduplicate to one file,
and the store's index records which steps point at it.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .models import FeatureGatingModel, MLPClassifier, RoutedExpertsModel

MAGIC = b"GBOXCKPT"
FORMAT_VERSION = 1

MODEL_REGISTRY = {
    MLPClassifier.kind: MLPClassifier,
    RoutedExpertsModel.kind: RoutedExpertsModel,
    FeatureGatingModel.kind: FeatureGatingModel,
}


class CheckpointError(Exception):
    pass


class CheckpointFormatError(CheckpointError):
    pass


class CheckpointIntegrityError(CheckpointError):
    pass


@dataclass
class Checkpoint:
    checkpoint_id: str
    step: int
    config: dict
    arrays: list[tuple[str, np.ndarray]]

    def fingerprint(self) -> str:
        """Hash of the config alone (architecture identity, not weights)."""
        blob = json.dumps(self.config, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _model_entries(model) -> list[tuple[str, np.ndarray]]:
    entries = [(name, p.values) for name, p in model.named_params()]
    entries.extend(model.named_buffers())
    return entries


def serialize_model(model) -> bytes:
    entries = _model_entries(model)
    header = {
        "format_version": FORMAT_VERSION,
        "config": model.config(),
        "arrays": [[name, list(arr.shape)] for name, arr in entries],
    }
    hj = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    block = b"".join(np.ascontiguousarray(arr, dtype="<f8").tobytes()
                     for _, arr in entries)
    return MAGIC + struct.pack("<Q", len(hj)) + hj + block


def checkpoint_id_of(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def deserialize(data: bytes) -> tuple[dict, list[tuple[str, np.ndarray]]]:
    if data[:8] != MAGIC:
        raise CheckpointFormatError("not a checkpoint: bad magic bytes")
    if len(data) < 16:
        raise CheckpointFormatError("truncated checkpoint header")
    (hlen,) = struct.unpack("<Q", data[8:16])
    if len(data) < 16 + hlen:
        raise CheckpointFormatError("truncated checkpoint header")
    try:
        header = json.loads(data[16:16 + hlen])
    except json.JSONDecodeError as err:
        raise CheckpointFormatError(f"corrupt checkpoint header: {err}") from err
    if header.get("format_version") != FORMAT_VERSION:
        raise CheckpointFormatError(
            f"unsupported format version {header.get('format_version')!r}")
    arrays = []
    offset = 16 + hlen
    for name, shape in header["arrays"]:
        count = int(np.prod(shape)) if shape else 1
        end = offset + 8 * count
        if end > len(data):
            raise CheckpointFormatError(f"truncated parameter block at {name!r}")
        arr = np.frombuffer(data[offset:end], dtype="<f8").reshape(shape).copy()
        arrays.append((name, arr))
        offset = end
    if offset != len(data):
        raise CheckpointFormatError(
            f"{len(data) - offset} trailing bytes after parameter block")
    return header["config"], arrays


def build_model(config: dict):
    kind = config.get("kind")
    if kind not in MODEL_REGISTRY:
        raise CheckpointFormatError(
            f"unknown model kind {kind!r}; known: {', '.join(MODEL_REGISTRY)}")
    return MODEL_REGISTRY[kind].from_config(config)


def restore_model(data: bytes):
    """Rebuild the model and overwrite its arrays with the stored values."""
    config, arrays = deserialize(data)
    model = build_model(config)
    expected = _model_entries(model)
    if [n for n, _ in expected] != [n for n, _ in arrays]:
        raise CheckpointFormatError(
            "checkpoint arrays do not match the configured architecture")
    for (name, target), (_, stored) in zip(expected, arrays):
        if target.shape != stored.shape:
            raise CheckpointFormatError(
                f"shape mismatch for {name}: {target.shape} vs {stored.shape}")
        target[...] = stored
    model.checkpoint_id = checkpoint_id_of(data)
    return model


class CheckpointStore:
    """Directory of content-addressed checkpoint files plus an index of
    (step, id) rows. Concurrent readers are safe; one writer at a time."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.index_path = self.root / "index.json"

    def _read_index(self) -> list[dict]:
        if not self.index_path.exists():
            return []
        return json.loads(self.index_path.read_text())

    def _write_atomic(self, path: Path, data: bytes) -> None:
        tmp = path.with_suffix(path.suffix + ".tmp")
        try:
            tmp.write_bytes(data)
            os.replace(tmp, path)
        except OSError as err:
            raise CheckpointError(f"cannot write {path}: {err}") from err

    def save(self, model, step: int) -> Checkpoint:
        data = serialize_model(model)
        cid = checkpoint_id_of(data)
        path = self.root / f"{cid}.ckpt"
        if not path.exists():
            self._write_atomic(path, data)
        index = self._read_index()
        row = {"step": int(step), "id": cid}
        if row not in index:
            index.append(row)
            index.sort(key=lambda r: (r["step"], r["id"]))
            self._write_atomic(self.index_path,
                               json.dumps(index, indent=1).encode())
        model.checkpoint_id = cid
        config, arrays = deserialize(data)
        return Checkpoint(cid, int(step), config, arrays)

    def _path_of(self, checkpoint_id: str) -> Path:
        path = self.root / f"{checkpoint_id}.ckpt"
        if not path.exists():
            raise CheckpointError(f"no checkpoint {checkpoint_id} under {self.root}")
        return path

    def load_bytes(self, checkpoint_id: str) -> bytes:
        data = self._path_of(checkpoint_id).read_bytes()
        actual = checkpoint_id_of(data)
        if actual != checkpoint_id:
            raise CheckpointIntegrityError(
                f"checkpoint {checkpoint_id} content hashes to {actual}")
        return data

    def load(self, checkpoint_id: str) -> Checkpoint:
        data = self.load_bytes(checkpoint_id)
        config, arrays = deserialize(data)
        steps = [r["step"] for r in self._read_index() if r["id"] == checkpoint_id]
        step = min(steps) if steps else -1
        return Checkpoint(checkpoint_id, step, config, arrays)

    def load_model(self, checkpoint_id: str):
        return restore_model(self.load_bytes(checkpoint_id))

    def entries(self) -> list[dict]:
        return self._read_index()

    def latest(self) -> dict:
        index = self._read_index()
        if not index:
            raise CheckpointError(f"empty checkpoint store at {self.root}")
        return max(index, key=lambda r: r["step"])
