import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from glassbox.explainers import BlackBox, Explanation, ExplainerConfig
from glassbox.metrics import (PGI, PGU, ConsistencyReport, DisagreementMatrix,
                              consistency_across_seeds, disagreement_matrix,
                              forward_latency, js_distance, latency_profile,
                              prediction_gap, rank_agreement)
from glassbox.models import MLPClassifier
from glassbox.rng import Rng


def expl(values, method="m", instance_id=None):
    return Explanation(method, np.asarray(values, dtype=np.float64), 1, 0.0,
                       instance_id=instance_id)


def linear_blackbox(w, scale):
    w = np.asarray(w, dtype=np.float64)

    def predict(X):
        s = X @ w / scale
        return np.stack([0.5 - s, 0.5 + s], axis=1)

    return BlackBox(predict, w.size, 2)


finite_vectors = st.lists(
    st.floats(min_value=-50, max_value=50, allow_nan=False), min_size=2,
    max_size=8)


# -- rank agreement -----------------------------------------------------------

def test_rank_agreement_hand_cases():
    a = expl([5.0, -3.0, 1.0, 0.2])
    b = expl([4.0, 3.5, 0.1, 0.3])
    # top-2 by |value|: a -> {0, 1}, b -> {0, 1}
    assert rank_agreement(a, b, 2) == 1.0
    # top-1: both pick 0
    assert rank_agreement(a, b, 1) == 1.0
    # top-3: a -> {0,1,2}, b -> {0,1,3} -> 2/3 overlap
    assert rank_agreement(a, b, 3) == pytest.approx(2 / 3)


def test_rank_agreement_disjoint_is_zero():
    assert rank_agreement(expl([9, 0, 0, 0]), expl([0, 0, 0, 9]), 1) == 0.0


def test_rank_agreement_breaks_ties_to_lower_index():
    tied = expl([1.0, 1.0, 0.0])
    other = expl([0.0, 1.0, 1.0])
    # |values| tie: lower index wins, so tied -> {0}, other -> {1}
    assert rank_agreement(tied, other, 1) == 0.0
    assert rank_agreement(tied, tied, 1) == 1.0


def test_rank_agreement_validates_k_and_width():
    a, b = expl([1, 2]), expl([1, 2])
    with pytest.raises(ValueError, match="k must be"):
        rank_agreement(a, b, 0)
    with pytest.raises(ValueError, match="k must be"):
        rank_agreement(a, b, 3)
    with pytest.raises(ValueError, match="features"):
        rank_agreement(a, expl([1, 2, 3]), 1)


@given(finite_vectors, st.integers(min_value=1, max_value=8))
@settings(max_examples=60, deadline=None)
def test_rank_agreement_symmetric_and_bounded(values, k):
    a = expl(values)
    b = expl(list(reversed(values)))
    k = min(k, len(values))
    left, right = rank_agreement(a, b, k), rank_agreement(b, a, k)
    assert left == right
    assert 0.0 <= left <= 1.0
    assert rank_agreement(a, a, k) == 1.0


# -- Jensen-Shannon -----------------------------------------------------------

def test_js_distance_matches_independent_reference():
    # scipy.spatial.distance.jensenshannon(p, q)^2 on the normalized
    # |value| distributions of [1,2,3,4] vs [4,3,2,1], natural log
    value = js_distance(expl([1, 2, 3, 4]), expl([4, 3, 2, 1]))
    assert value == pytest.approx(0.1064401352862232, abs=1e-9)


def test_js_distance_is_sign_blind():
    assert js_distance(expl([-1, 2, -3, 4]), expl([4, 3, 2, 1])) == \
        pytest.approx(0.1064401352862232, abs=1e-9)


def test_js_distance_identical_is_zero():
    a = expl([0.3, 0.5, 0.1])
    assert js_distance(a, a) == 0.0


def test_js_distance_max_on_disjoint_support():
    value = js_distance(expl([1, 0]), expl([0, 1]))
    assert value == pytest.approx(np.log(2), abs=1e-6)


@given(finite_vectors, st.floats(min_value=0.1, max_value=10))
@settings(max_examples=60, deadline=None)
def test_js_distance_properties(values, c):
    a, b = expl(values), expl(list(reversed(values)))
    v = js_distance(a, b)
    assert 0.0 <= v <= np.log(2) + 1e-12
    assert v == pytest.approx(js_distance(b, a), abs=1e-12)
    if max(abs(x) for x in values) >= 1e-2:
        # scale invariance is exact only away from the smoothing floor
        scaled = expl([c * x for x in values])
        assert js_distance(scaled, b) == pytest.approx(v, abs=1e-6)


# -- prediction gap -----------------------------------------------------------

def test_prediction_gap_linear_hand_case():
    scale = 20.0
    f = linear_blackbox([3.0, 1.0], scale)
    x = np.array([1.0, 1.0])
    e = expl([3.0, 1.0])
    assert prediction_gap(f, x, e, 1, PGI) == pytest.approx(3.0 / scale)
    assert prediction_gap(f, x, e, 1, PGU) == pytest.approx(1.0 / scale)
    assert prediction_gap(f, x, e, 2, PGI) == pytest.approx(4.0 / scale)
    assert prediction_gap(f, x, e, 0, PGI) == 0.0


def test_prediction_gap_ties_use_lower_index_in_both_directions():
    scale = 20.0
    f = linear_blackbox([3.0, 1.0], scale)
    x = np.array([1.0, 1.0])
    tied = expl([2.0, 2.0])
    assert prediction_gap(f, x, tied, 1, PGI) == pytest.approx(3.0 / scale)
    assert prediction_gap(f, x, tied, 1, PGU) == pytest.approx(3.0 / scale)


def test_prediction_gap_respects_explicit_baseline():
    scale = 20.0
    f = linear_blackbox([3.0, 1.0], scale)
    x = np.array([1.0, 1.0])
    e = expl([3.0, 1.0])
    gap = prediction_gap(f, x, e, 1, PGI, baseline=np.array([1.0, 1.0]))
    assert gap == 0.0


def test_prediction_gap_validates_inputs():
    f = linear_blackbox([1.0, 1.0], 10.0)
    e = expl([1.0, 2.0])
    with pytest.raises(ValueError, match="direction"):
        prediction_gap(f, np.zeros(2), e, 1, "sideways")
    with pytest.raises(ValueError, match="k must be"):
        prediction_gap(f, np.zeros(2), e, 3, PGI)


# -- disagreement matrix ------------------------------------------------------

def test_disagreement_matrix_rank_agreement():
    es = [expl([5, 1, 0], method="a", instance_id=3),
          expl([5, 0, 1], method="b", instance_id=3),
          expl([0, 1, 5], method="c")]
    m = disagreement_matrix(es, metric="rank_agreement", k=1)
    assert m.methods == ["a", "b", "c"]
    np.testing.assert_array_equal(np.diag(m.values), 1.0)
    np.testing.assert_array_equal(m.values, m.values.T)
    assert m.values[0, 1] == 1.0
    assert m.values[0, 2] == 0.0
    assert m.mean_off_diagonal() == pytest.approx((1.0 + 0.0 + 0.0) * 2 / 6)
    assert m.to_dict()["metric"] == "rank_agreement"


def test_disagreement_matrix_js():
    es = [expl([1, 0]), expl([0, 1])]
    m = disagreement_matrix(es, metric="js_distance")
    np.testing.assert_array_equal(np.diag(m.values), 0.0)
    assert m.values[0, 1] == pytest.approx(np.log(2), abs=1e-6)
    assert m.k is None


def test_disagreement_matrix_validation():
    with pytest.raises(ValueError, match="at least two"):
        disagreement_matrix([expl([1, 2])])
    mixed = [expl([1, 2], instance_id=0), expl([1, 2], instance_id=1)]
    with pytest.raises(ValueError, match="different instances"):
        disagreement_matrix(mixed)
    with pytest.raises(ValueError, match="unknown metric"):
        disagreement_matrix([expl([1, 2]), expl([2, 1])], metric="cosine")


# -- consistency --------------------------------------------------------------

def test_consistency_uses_sequential_seeds():
    seen = []

    def predict(X):
        return np.full((X.shape[0], 2), 0.5)

    f = BlackBox(predict, 3, 2)
    real_cfg = ExplainerConfig("lime", {"n_samples": 30})

    import glassbox.metrics as metrics_mod
    orig = metrics_mod.run_explainer

    def spy(config, f_, x, seed, **kw):
        seen.append(seed)
        return orig(config, f_, x, seed, **kw)

    metrics_mod.run_explainer, saved = spy, orig
    try:
        rep = consistency_across_seeds(real_cfg, f, np.zeros(3), n_seeds=4, k=2)
    finally:
        metrics_mod.run_explainer = saved
    assert seen == [0, 1, 2, 3]
    assert rep.n_seeds == 4
    assert rep.pairwise.shape == (6,)
    assert 0.0 <= rep.min <= rep.mean <= 1.0
    assert set(rep.to_dict()) == {"method", "n_seeds", "k", "pairwise",
                                  "mean", "min"}


def test_consistency_needs_two_seeds():
    f = linear_blackbox([1.0, 1.0], 10.0)
    with pytest.raises(ValueError, match="at least 2"):
        consistency_across_seeds(ExplainerConfig("lime"), f, np.zeros(2),
                                 n_seeds=1)


def test_deterministic_explainer_is_perfectly_consistent():
    f = linear_blackbox([2.0, -1.0, 0.5], 10.0)
    rep = consistency_across_seeds(ExplainerConfig("shapley_exact"), f,
                                   np.array([0.4, -0.2, 0.9]), n_seeds=3, k=2)
    assert rep.mean == 1.0 and rep.min == 1.0


# -- latency ------------------------------------------------------------------

def test_latency_profile_requires_ten_instances():
    f = linear_blackbox([1.0, 1.0], 10.0)
    with pytest.raises(ValueError, match="at least 10"):
        latency_profile(ExplainerConfig("shapley_exact"), f, np.zeros((9, 2)))


def test_latency_profile_stats_shape():
    f = linear_blackbox([1.0, 1.0], 10.0)
    stats = latency_profile(ExplainerConfig("shapley_exact"), f,
                            Rng(0).normal((12, 2)))
    assert stats.method == "shapley_exact"
    assert stats.n_instances == 12
    assert 0 < stats.median_ms <= stats.p95_ms
    assert set(stats.to_dict()) == {"method", "n_instances", "median_ms",
                                    "p95_ms", "mean_ms"}


def test_forward_latency_names_the_model_kind():
    model = MLPClassifier(4, 2, Rng(0), hidden=(8,))
    stats = forward_latency(model, Rng(1).normal((10, 4)))
    assert stats.method == "mlp_blackbox_forward"
    with pytest.raises(ValueError, match="at least 10"):
        forward_latency(model, np.zeros((3, 4)))
