import json

import numpy as np
import pytest

from glassbox.checkpoints import (CheckpointError, CheckpointFormatError,
                                  CheckpointIntegrityError, CheckpointStore,
                                  checkpoint_id_of, deserialize, restore_model,
                                  serialize_model)
from glassbox.gating import GateConfig
from glassbox.groups import FeatureGroupSpec
from glassbox.models import FeatureGatingModel, MLPClassifier, RoutedExpertsModel
from glassbox.rng import Rng


def all_models():
    groups = FeatureGroupSpec.contiguous(6, 2)
    return [
        MLPClassifier(6, 2, Rng(0), hidden=(8, 4)),
        RoutedExpertsModel(groups, 2, Rng(1), disc_hidden=(4,),
                           expert_hidden=(4,),
                           gate_config=GateConfig(selection="top_k", k=1)),
        FeatureGatingModel(6, 2, Rng(2), gate_hidden=(4,),
                           predictor_hidden=(4,),
                           imputation_values=np.linspace(-1, 1, 6)),
    ]


@pytest.mark.parametrize("model", all_models(), ids=lambda m: m.kind)
def test_round_trip_is_bit_exact(model):
    data = serialize_model(model)
    restored = restore_model(data)
    assert serialize_model(restored) == data
    x = Rng(9).normal((5, 6))
    np.testing.assert_array_equal(model.predict_proba(x),
                                  restored.predict_proba(x))


def test_identical_states_share_an_id():
    a, b = MLPClassifier(4, 2, Rng(7)), MLPClassifier(4, 2, Rng(7))
    assert checkpoint_id_of(serialize_model(a)) == \
        checkpoint_id_of(serialize_model(b))
    c = MLPClassifier(4, 2, Rng(8))
    assert checkpoint_id_of(serialize_model(a)) != \
        checkpoint_id_of(serialize_model(c))


def test_parameter_change_changes_id():
    model = MLPClassifier(4, 2, Rng(0))
    before = checkpoint_id_of(serialize_model(model))
    model.net.weights[0].values[0, 0] += 1e-9
    assert checkpoint_id_of(serialize_model(model)) != before


def test_bad_magic_rejected():
    with pytest.raises(CheckpointFormatError, match="magic"):
        deserialize(b"NOTACKPT" + b"\x00" * 64)


def test_truncated_and_trailing_bytes_rejected():
    data = serialize_model(MLPClassifier(3, 2, Rng(0), hidden=(4,)))
    with pytest.raises(CheckpointFormatError, match="truncated"):
        deserialize(data[:40])
    with pytest.raises(CheckpointFormatError):
        deserialize(data + b"\x00")


def test_version_mismatch_rejected():
    data = serialize_model(MLPClassifier(3, 2, Rng(0), hidden=(4,)))
    header_len = int.from_bytes(data[8:16], "little")
    header = json.loads(data[16:16 + header_len])
    header["format_version"] = 999
    raw = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    forged = data[:8] + len(raw).to_bytes(8, "little") + raw + data[16 + header_len:]
    with pytest.raises(CheckpointFormatError, match="version"):
        deserialize(forged)


def test_unknown_model_kind_rejected():
    data = serialize_model(MLPClassifier(3, 2, Rng(0), hidden=(4,)))
    header_len = int.from_bytes(data[8:16], "little")
    header = json.loads(data[16:16 + header_len])
    header["config"]["kind"] = "transformer"
    raw = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    forged = data[:8] + len(raw).to_bytes(8, "little") + raw + data[16 + header_len:]
    with pytest.raises(CheckpointFormatError, match="transformer"):
        restore_model(forged)


def test_store_save_and_load(tmp_path):
    store = CheckpointStore(tmp_path)
    model = MLPClassifier(4, 2, Rng(0), hidden=(8,))
    ckpt = store.save(model, step=5)
    assert model.checkpoint_id == ckpt.checkpoint_id
    loaded = store.load(ckpt.checkpoint_id)
    assert loaded.step == 5
    assert loaded.checkpoint_id == ckpt.checkpoint_id
    restored = store.load_model(ckpt.checkpoint_id)
    x = Rng(1).normal((4, 4))
    np.testing.assert_array_equal(model.predict_proba(x),
                                  restored.predict_proba(x))


def test_store_index_rows_sorted_by_step(tmp_path):
    store = CheckpointStore(tmp_path)
    ids = []
    for step in (30, 10, 20):
        model = MLPClassifier(3, 2, Rng(step), hidden=(4,))
        ids.append(store.save(model, step=step).checkpoint_id)
    steps = [row["step"] for row in store.entries()]
    assert steps == sorted(steps)
    assert store.latest()["step"] == 30
    assert store.latest()["id"] == ids[0]


def test_store_dedups_identical_states(tmp_path):
    store = CheckpointStore(tmp_path)
    model = MLPClassifier(3, 2, Rng(0), hidden=(4,))
    a = store.save(model, step=1)
    b = store.save(model, step=2)
    assert a.checkpoint_id == b.checkpoint_id
    files = list(tmp_path.glob("*.ckpt"))
    assert len(files) == 1
    # both index rows exist; load() reports the earliest matching step
    assert [r["step"] for r in store.entries()] == [1, 2]
    assert store.load(a.checkpoint_id).step == 1


def test_corrupted_file_fails_integrity_check(tmp_path):
    store = CheckpointStore(tmp_path)
    ckpt = store.save(MLPClassifier(3, 2, Rng(0), hidden=(4,)), step=0)
    path = next(tmp_path.glob("*.ckpt"))
    blob = bytearray(path.read_bytes())
    blob[-1] ^= 0xFF
    path.write_bytes(bytes(blob))
    with pytest.raises(CheckpointIntegrityError, match=ckpt.checkpoint_id[:8]):
        store.load_bytes(ckpt.checkpoint_id)


def test_missing_id_names_the_store(tmp_path):
    store = CheckpointStore(tmp_path)
    with pytest.raises(CheckpointError, match=str(tmp_path)):
        store.load_bytes("deadbeef")
    with pytest.raises(CheckpointError, match="empty"):
        store.latest()


def test_restored_model_carries_checkpoint_id(tmp_path):
    store = CheckpointStore(tmp_path)
    groups = FeatureGroupSpec.contiguous(6, 2)
    model = RoutedExpertsModel(groups, 2, Rng(3), disc_hidden=(4,),
                               expert_hidden=(4,))
    ckpt = store.save(model, step=0)
    restored = store.load_model(ckpt.checkpoint_id)
    assert restored.checkpoint_id == ckpt.checkpoint_id
    assert restored.gate_config.selection == model.gate_config.selection


def test_fingerprint_is_config_only(tmp_path):
    m1 = MLPClassifier(4, 2, Rng(0), hidden=(8,))
    m2 = MLPClassifier(4, 2, Rng(99), hidden=(8,))
    store = CheckpointStore(tmp_path)
    c1, c2 = store.save(m1, 0), store.save(m2, 0)
    assert c1.fingerprint() == c2.fingerprint()
    assert c1.checkpoint_id != c2.checkpoint_id
