import numpy as np
import pytest

from glassbox.data import SyntheticSpec, gen_synthetic, split, standardize_pair
from glassbox.gating import GateConfig
from glassbox.groups import FeatureGroupSpec
from glassbox.models import MLPClassifier, RoutedExpertsModel, train
from glassbox.rng import Rng

SWITCH_SPEC = SyntheticSpec(kind="switch_moe", num_features=12, num_groups=2,
                            n_samples=2000, noise_std=0.0, seed=0)


@pytest.fixture(scope="session")
def switch_splits():
    ds = gen_synthetic(SWITCH_SPEC)
    tr, te = split(ds, (0.7, 0.3), seed=0)
    tr, te, stats = standardize_pair(tr, te)
    return tr, te, stats


@pytest.fixture(scope="session")
def groups12():
    return FeatureGroupSpec.contiguous(12, 2)


@pytest.fixture(scope="session")
def icc_top1(switch_splits, groups12):
    """Routed MoE with a single-group gate, trained to convergence."""
    tr, _, _ = switch_splits
    model = RoutedExpertsModel(groups12, 2, Rng(0),
                               gate_config=GateConfig(selection="top_k", k=1))
    train(model, tr, epochs=300, rng=Rng(100))
    return model


@pytest.fixture(scope="session")
def icc_threshold(switch_splits, groups12):
    """Routed MoE with the default threshold gate."""
    tr, _, _ = switch_splits
    model = RoutedExpertsModel(groups12, 2, Rng(0))
    train(model, tr, epochs=300, rng=Rng(100))
    return model


@pytest.fixture(scope="session")
def mlp_switch(switch_splits):
    """Opaque baseline classifier on the same data."""
    tr, _, _ = switch_splits
    model = MLPClassifier(12, 2, Rng(3), hidden=(16, 16))
    train(model, tr, epochs=300, rng=Rng(4))
    return model


@pytest.fixture(scope="session")
def multi_splits():
    spec = SyntheticSpec(kind="multi_skill", num_features=6, num_groups=1,
                         n_samples=2000, noise_std=0.0, seed=0)
    ds = gen_synthetic(spec)
    tr, te = split(ds, (0.7, 0.3), seed=0)
    tr, te, _ = standardize_pair(tr, te)
    return tr, te


@pytest.fixture()
def zero_baseline():
    return np.zeros(12)
