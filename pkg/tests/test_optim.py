import math

import numpy as np
import pytest

from notebert import tensor as T
from notebert.optim import Adam, AdamState, adam_step
from notebert.tensor import ContractError


def test_first_step_moves_by_lr_times_sign():
    # with bias correction the first update is lr * g / (|g| + eps)
    p = T.parameter(np.array([1.0, -2.0, 0.5]))
    p.grad = np.array([0.3, -4.0, 0.0])
    adam_step([p], AdamState(lr=0.1))
    np.testing.assert_allclose(p.data, [0.9, -1.9, 0.5], atol=1e-8)


def test_two_steps_hand_computed():
    p = T.parameter(np.array([0.0]))
    st = AdamState(lr=0.01, beta1=0.9, beta2=0.999, eps=1e-8)
    p.grad = np.array([1.0])
    adam_step([p], st)
    p.grad = np.array([3.0])
    adam_step([p], st)
    m = 0.9 * 0.1 + 0.1 * 3.0
    v = 0.999 * 0.001 + 0.001 * 9.0
    mhat, vhat = m / (1 - 0.81), v / (1 - 0.999 ** 2)
    first = -0.01 * 1.0 / (1.0 + 1e-8)
    expect = first - 0.01 * mhat / (math.sqrt(vhat) + 1e-8)
    assert p.data[0] == pytest.approx(expect, abs=1e-12)
    assert st.t == 2


def test_missing_gradient_is_an_error():
    p = T.parameter(np.ones(2))
    with pytest.raises(ContractError):
        adam_step([p], AdamState())


def test_parameter_count_must_not_change():
    a, b = T.parameter(np.ones(1)), T.parameter(np.ones(1))
    st = AdamState()
    a.grad = np.ones(1)
    adam_step([a], st)
    b.grad = np.ones(1)
    with pytest.raises(ContractError):
        adam_step([a, b], st)


@pytest.mark.parametrize("kw", [{"lr": 0.0}, {"beta1": 1.0}, {"beta2": 0.0}])
def test_bad_hyperparameters(kw):
    with pytest.raises(ValueError):
        AdamState(**kw)


def test_minimizes_a_quadratic():
    target = np.array([3.0, -1.0, 0.25])
    x = T.parameter(np.zeros(3))
    opt = Adam([x], lr=0.05)
    for _ in range(2000):
        opt.zero_grad()
        d = x - T.Tensor(target)
        T.sum_(d * d).backward()
        opt.step()
    np.testing.assert_allclose(x.data, target, atol=1e-3)
