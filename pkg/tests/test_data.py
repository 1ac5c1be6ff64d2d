import numpy as np
import pytest

from glassbox.data import (CsvFormatError, Dataset, SyntheticSpec,
                           apply_standardization, gen_synthetic, load_csv,
                           save_csv, split, standardize, standardize_pair)
from glassbox.explainers import BlackBox, shapley_exact
from glassbox.models import MLPClassifier, train
from glassbox.rng import Rng


def test_generators_are_pure_functions_of_spec():
    spec = SyntheticSpec(kind="switch_moe", num_features=8, num_groups=2,
                         n_samples=100, seed=5)
    a, b = gen_synthetic(spec), gen_synthetic(spec)
    np.testing.assert_array_equal(a.features, b.features)
    np.testing.assert_array_equal(a.labels, b.labels)
    np.testing.assert_array_equal(a.relevant_groups, b.relevant_groups)


def test_unknown_kind_rejected():
    with pytest.raises(ValueError, match="unknown synthetic kind"):
        SyntheticSpec(kind="moons")


def test_noiseless_planted_linear_is_learnable():
    spec = SyntheticSpec(kind="planted_linear", num_features=8, num_groups=1,
                         n_samples=1500, noise_std=0.0, seed=1)
    tr, te = split(gen_synthetic(spec), (0.7, 0.3), seed=1)
    tr, te, _ = standardize_pair(tr, te)
    model = MLPClassifier(8, 2, Rng(0), hidden=(16, 16))
    train(model, tr, epochs=250, rng=Rng(1))
    acc = np.mean(np.argmax(model.predict_proba(te.features), 1) == te.labels)
    assert acc >= 0.98


def _generator_blackbox(ds: Dataset, x: np.ndarray) -> BlackBox:
    """The known switch_moe generating rule, frozen to x's routing, as a
    two-class model with a linear score head."""
    weights = ds.meta["rule_weights"]
    switch = ds.meta["switch_feature"]
    thresholds = ds.meta["thresholds"]
    chosen = int(np.searchsorted(thresholds, x[switch], side="left"))
    w = weights[chosen]
    scale = 2.0 * (1.0 + np.abs(x).sum())

    def predict(rows):
        score = rows @ w / scale
        return np.stack([0.5 - score, 0.5 + score], axis=1)

    return BlackBox(predict, ds.num_features, 2, name="generator")


def test_switch_tags_agree_with_exact_shapley_of_generator():
    """Ground-truth validation: for each instance, exact Shapley of the
    generating rule (switch pinned via the baseline) puts zero mass on
    every feature outside the tagged group."""
    spec = SyntheticSpec(kind="switch_moe", num_features=8, num_groups=2,
                         n_samples=120, noise_std=0.0, seed=3)
    ds = gen_synthetic(spec)
    blocks = ds.meta["blocks"]
    switch = ds.meta["switch_feature"]
    for i in range(100):
        x = ds.features[i]
        f = _generator_blackbox(ds, x)
        baseline = np.zeros(ds.num_features)
        baseline[switch] = x[switch]  # coalition rows keep the routing
        expl = shapley_exact(f, x, baseline=baseline, target_class=1)
        tag = int(ds.relevant_groups[i])
        outside = np.setdiff1d(np.arange(ds.num_features), blocks[tag])
        assert np.max(np.abs(expl.attributions[outside])) <= 1e-8
        inside = np.abs(expl.attributions[blocks[tag]]).sum()
        assert inside > 1e-6  # tagged group actually carries the signal


def test_multi_skill_categories_cover_both_tasks():
    spec = SyntheticSpec(kind="multi_skill", num_features=6, num_groups=1,
                         n_samples=400, seed=2)
    ds = gen_synthetic(spec)
    cats = set(np.asarray(ds.categories).tolist())
    assert cats == {"easy", "hard"}


def test_standardize_moments_and_idempotence():
    spec = SyntheticSpec(kind="planted_linear", num_features=5, num_groups=1,
                         n_samples=300, seed=4)
    ds = gen_synthetic(spec)
    std, stats = standardize(ds)
    assert np.abs(std.features.mean(axis=0)).max() < 1e-9
    assert np.abs(std.features.std(axis=0) - 1.0).max() < 1e-6
    again, _ = standardize(std)
    assert np.abs(again.features - std.features).max() < 1e-9


def test_constant_column_flagged_not_divided():
    feats = np.column_stack([np.ones(50), np.arange(50, dtype=float)])
    ds = Dataset(feats, np.zeros(50, dtype=np.int64))
    std, stats = standardize(ds)
    assert stats.constant[0] and not stats.constant[1]
    assert np.all(np.isfinite(std.features))
    np.testing.assert_allclose(std.features[:, 0], 0.0)


def test_split_is_stratified_and_seeded():
    spec = SyntheticSpec(kind="planted_linear", num_features=4, num_groups=1,
                         n_samples=100, seed=6)
    ds = gen_synthetic(spec)
    tr, te = split(ds, (0.8, 0.2), seed=9)
    assert tr.n == 80 and te.n == 20
    for label in (0, 1):
        full = np.mean(ds.labels == label)
        assert abs(np.mean(tr.labels == label) - full) <= 1.0 / 80 + full * 0.05
    tr2, te2 = split(ds, (0.8, 0.2), seed=9)
    np.testing.assert_array_equal(tr.features, tr2.features)


def test_standardize_pair_uses_train_stats_only():
    spec = SyntheticSpec(kind="planted_linear", num_features=4, num_groups=1,
                         n_samples=200, seed=7)
    tr, te = split(gen_synthetic(spec), (0.5, 0.5), seed=0)
    tr_std, te_std, stats = standardize_pair(tr, te)
    recomputed = apply_standardization(te, stats)
    np.testing.assert_array_equal(te_std.features, recomputed.features)
    # train stats come from train alone
    np.testing.assert_allclose(tr.features.mean(axis=0), stats.mean)


def test_csv_round_trip(tmp_path):
    spec = SyntheticSpec(kind="planted_linear", num_features=3, num_groups=1,
                         n_samples=20, seed=8)
    ds = gen_synthetic(spec)
    path = tmp_path / "data.csv"
    save_csv(ds, path)
    back = load_csv(path)
    np.testing.assert_allclose(back.features, ds.features)
    np.testing.assert_array_equal(back.labels, ds.labels)


def test_csv_bad_cell_names_row_and_column(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("age,height,label\n1.0,2.0,0\nNA,3.0,1\n")
    with pytest.raises(CsvFormatError, match=r"row 2.*age|age.*row 2"):
        load_csv(path)


def test_csv_ragged_row_rejected(tmp_path):
    path = tmp_path / "ragged.csv"
    path.write_text("a,b,label\n1.0,2.0,0\n1.0,1\n")
    with pytest.raises(CsvFormatError):
        load_csv(path)


def test_csv_missing_label_column(tmp_path):
    path = tmp_path / "nolabel.csv"
    path.write_text("a,b\n1.0,2.0\n")
    with pytest.raises(CsvFormatError, match="label"):
        load_csv(path)
