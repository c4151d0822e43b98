"""Tests for the functional Adam optimizer."""
import numpy as np
import pytest

from dggcn.errors import ShapeError
from dggcn.optim import AdamState, adam_step


def _params():
    return {"w": np.array([1.0, -2.0]), "b": np.array([[0.5]])}


def test_zero_grad_leaves_params_unchanged():
    params = _params()
    grads = {k: np.zeros_like(v) for k, v in params.items()}
    state = AdamState.init(params)
    new_params, new_state = adam_step(params, grads, state)
    for k in params:
        assert np.array_equal(new_params[k], params[k])
    assert new_state.step == 1
    # moments still decay toward zero (trivially stay zero here)
    for k in params:
        assert np.all(new_state.m[k] == 0)
        assert np.all(new_state.v[k] == 0)


def test_first_step_is_minus_lr_times_sign():
    params = {"w": np.array([0.0, 0.0, 0.0])}
    grads = {"w": np.array([3.0, -0.01, 0.0])}
    state = AdamState.init(params)
    new_params, _ = adam_step(params, grads, state, lr=0.1)
    # bias-corrected first step moves by ~lr * sign(g) regardless of |g|
    assert np.allclose(new_params["w"][:2], [-0.1, 0.1], atol=1e-6)
    assert new_params["w"][2] == 0.0


def test_functional_inputs_untouched():
    params = _params()
    snapshot = {k: v.copy() for k, v in params.items()}
    grads = {k: np.ones_like(v) for k, v in params.items()}
    state = AdamState.init(params)
    adam_step(params, grads, state, lr=0.5)
    for k in params:
        assert np.array_equal(params[k], snapshot[k])
    assert state.step == 0


def test_quadratic_converges():
    # f(w) = (w - 3)^2, grad = 2(w - 3); 200 steps at lr=0.1 from w=0
    params = {"w": np.array([0.0])}
    state = AdamState.init(params)
    for _ in range(200):
        grads = {"w": 2.0 * (params["w"] - 3.0)}
        params, state = adam_step(params, grads, state, lr=0.1)
    assert abs(float(params["w"][0]) - 3.0) < 0.1


def test_mismatched_keys_raise():
    params = _params()
    state = AdamState.init(params)
    with pytest.raises(ShapeError, match="keys"):
        adam_step(params, {"w": np.zeros(2)}, state)


def test_mismatched_shape_raises():
    params = _params()
    state = AdamState.init(params)
    grads = {"w": np.zeros(3), "b": np.zeros((1, 1))}
    with pytest.raises(ShapeError, match="w"):
        adam_step(params, grads, state)
