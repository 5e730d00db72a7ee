import numpy as np
import pytest

from ctqwalk.errors import NumericError
from ctqwalk.optim import AdamState, adam_step
from ctqwalk.tensor import Tensor


def test_zero_gradient_leaves_parameter_unchanged():
    p = Tensor(np.array([1.0, -2.0, 3.0]), requires_grad=True)
    state = AdamState()
    before = p.data.copy()
    for _ in range(5):
        p.zero_grad()
        adam_step([("p", p)], state)
    np.testing.assert_array_equal(p.data, before)
    assert np.abs(state.m["p"]).max() == 0.0


def test_first_step_magnitude_is_learning_rate():
    p = Tensor(np.array([0.0, 0.0]), requires_grad=True)
    p._grad = np.array([0.3, -40.0])
    state = AdamState(lr=0.001)
    adam_step([("p", p)], state)
    # bias-corrected first step is -lr * sign(g) up to O(eps)
    np.testing.assert_allclose(p.data, [-0.001, 0.001], rtol=1e-4)
    assert state.step == 1


def test_moment_decay_toward_zero():
    p = Tensor(np.array([1.0]), requires_grad=True)
    p._grad = np.array([2.0])
    state = AdamState()
    adam_step([("p", p)], state)
    m0, v0 = state.m["p"].copy(), state.v["p"].copy()
    for _ in range(20):
        p.zero_grad()
        adam_step([("p", p)], state)
    assert np.abs(state.m["p"]).max() < np.abs(m0).max()
    assert np.abs(state.v["p"]).max() < np.abs(v0).max()


def test_scalar_descent_on_quadratic():
    w = Tensor(np.array([0.0]), requires_grad=True)
    state = AdamState(lr=0.1)
    gaps = []
    for _ in range(50):
        w.zero_grad()
        w._grad = 2.0 * (w.data - 2.0)    # d/dw (w - 2)^2
        adam_step([("w", w)], state)
        gaps.append(abs(float(w.data[0]) - 2.0))
    assert gaps[-1] < 0.5
    # monotone approach after burn-in until the iterate first reaches the
    # optimum (momentum then causes one small overshoot before settling)
    burn = 5
    cross = next(i for i, g in enumerate(gaps) if g < 0.05)
    assert all(g2 < g1 for g1, g2 in zip(gaps[burn:cross], gaps[burn + 1:cross]))
    assert gaps[-1] < gaps[burn] / 10


def test_nan_gradient_names_parameter():
    p = Tensor(np.array([1.0]), requires_grad=True)
    p._grad = np.array([float("nan")])
    with pytest.raises(NumericError, match="encoder.embed_w1"):
        adam_step([("encoder.embed_w1", p)], AdamState())
