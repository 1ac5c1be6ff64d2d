import numpy as np
import pytest

import glassbox.tensor as T
from glassbox.optim import Adam, OptimStepError, SGD, make_optimizer
from glassbox.tensor import Tensor


def test_sgd_matches_hand_update():
    p = Tensor(np.array([1.0, -2.0]), requires_grad=True)
    p.grad = np.array([0.5, 0.25])
    SGD([p], learning_rate=0.1).step()
    np.testing.assert_allclose(p.values, [1.0 - 0.05, -2.0 - 0.025])
    assert p.grad is None


def test_adam_first_step_matches_hand_update():
    # with zero-initialized moments, the bias-corrected first step is
    # lr * g / (|g| + eps) elementwise
    g = np.array([0.3, -0.7, 1.2])
    p = Tensor(np.zeros(3), requires_grad=True)
    p.grad = g.copy()
    Adam([p], learning_rate=0.05).step()
    expected = -0.05 * g / (np.abs(g) + 1e-8)
    np.testing.assert_allclose(p.values, expected, rtol=1e-12)


def test_adam_two_steps_match_reference():
    lr, b1, b2, eps = 0.01, 0.9, 0.999, 1e-8
    p = Tensor(np.array([0.5]), requires_grad=True)
    opt = Adam([p], learning_rate=lr)
    ref = 0.5
    m = v = 0.0
    for t, g in enumerate([0.4, -0.2], start=1):
        p.grad = np.array([g])
        opt.step()
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        ref -= lr * (m / (1 - b1 ** t)) / (np.sqrt(v / (1 - b2 ** t)) + eps)
    np.testing.assert_allclose(p.values, [ref], rtol=1e-12)


def test_nonfinite_gradient_aborts_before_mutation():
    p = Tensor(np.array([1.0]), requires_grad=True)
    q = Tensor(np.array([2.0]), requires_grad=True)
    p.grad = np.array([np.nan])
    q.grad = np.array([1.0])
    opt = SGD([p, q], learning_rate=0.1)
    with pytest.raises(OptimStepError, match="parameter 0"):
        opt.step()
    np.testing.assert_array_equal(p.values, [1.0])
    np.testing.assert_array_equal(q.values, [2.0])


def test_missing_grad_treated_as_zero():
    p = Tensor(np.array([3.0]), requires_grad=True)
    SGD([p], learning_rate=0.5).step()
    np.testing.assert_array_equal(p.values, [3.0])


def test_adam_minimizes_quadratic():
    p = Tensor(np.array([4.0, -3.0]), requires_grad=True)
    opt = Adam([p], learning_rate=0.1)
    for _ in range(400):
        loss = T.tsum(p * p)
        loss.backward()
        opt.step()
    assert np.abs(p.values).max() < 1e-2


def test_make_optimizer_dispatch():
    p = Tensor(np.array([1.0]), requires_grad=True)
    assert make_optimizer("sgd", [p], 0.1).kind == "sgd"
    assert make_optimizer("adam", [p], 0.1).kind == "adam"
    with pytest.raises(ValueError, match="unknown optimizer"):
        make_optimizer("rmsprop", [p], 0.1)


def test_learning_rate_validation():
    p = Tensor(np.array([1.0]), requires_grad=True)
    with pytest.raises(ValueError):
        SGD([p], learning_rate=0.0)
