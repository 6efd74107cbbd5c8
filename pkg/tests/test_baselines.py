import warnings

import numpy as np
import pytest
from scipy.optimize import minimize

from notebert.baselines import (BowFeaturizer, ConvergenceWarning, LogisticModel, objective_value, select_l2,
                                train_logreg)


def test_vocabulary_order_and_cap():
    bow = BowFeaturizer.fit(["b a c a", "c a d"], max_features=3)
    assert bow.words == ["a", "c", "b"]
    assert bow.featurize("a a z c") == {0: 2, 1: 1}
    X = bow.transform(["a a z c", ""])
    assert X.shape == (2, 3) and X.toarray().tolist() == [[2, 1, 0], [0, 0, 0]]


def separable(n=80, d=5, seed=0, noise=1.0):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, d))
    w = rng.normal(size=d)
    y = (X @ w + noise * rng.normal(size=n) > 0).astype(float)
    return X, y


def _scipy_optimum(X, y, l2):
    def f(theta):
        w, b = theta[:-1], theta[-1]
        z = X @ w + b
        loss = np.mean(np.logaddexp(0, z) - y * z) + l2 * w @ w
        p = 1 / (1 + np.exp(-z))
        g = np.r_[X.T @ (p - y) / len(y) + 2 * l2 * w, np.mean(p - y)]
        return loss, g
    res = minimize(f, np.zeros(X.shape[1] + 1), jac=True, method="L-BFGS-B", options={"gtol": 1e-12, "ftol": 0})
    return res.x


def test_matches_a_reference_optimizer():
    X, y = separable()
    m = train_logreg(X, y, l2=0.05, tol=1e-9, max_iter=50000)
    ref = _scipy_optimum(X, y, 0.05)
    np.testing.assert_allclose(m.weights, ref[:-1], atol=1e-6)
    assert m.bias == pytest.approx(ref[-1], abs=1e-6)
    assert m.grad_norm < 1e-9


def test_every_step_lowers_the_objective():
    X, y = separable(seed=3)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        values = [objective_value(train_logreg(X, y, 0.01, max_iter=k, tol=0.0), X, y, 0.01)
                  for k in (1, 2, 5, 20, 80)]
    assert all(b <= a for a, b in zip(values, values[1:]))


def test_early_stop_warns():
    X, y = separable()
    with pytest.warns(ConvergenceWarning):
        m = train_logreg(X, y, 0.01, max_iter=3)
    assert m.iterations == 3


def test_one_class_is_rejected():
    with pytest.raises(ValueError):
        train_logreg(np.ones((3, 2)), np.ones(3))


def test_sparse_and_dense_agree():
    from scipy import sparse
    X, y = separable(n=40, d=4)
    a = train_logreg(X, y, 0.1)
    b = train_logreg(sparse.csr_matrix(X), y, 0.1)
    np.testing.assert_array_equal(a.weights, b.weights)


def test_probabilities():
    m = LogisticModel(np.array([1.0, -1.0]), 0.5, 0.0, 0, 0.0)
    np.testing.assert_allclose(m.predict_proba(np.array([[0.0, 0.5]])), [0.5])


def test_select_l2_prefers_lower_validation_loss():
    X, y = separable(n=200, d=20, seed=4, noise=3.0)
    chosen = select_l2(X[:40], y[:40], X[40:], y[40:], grid=(1e-4, 1.0))
    losses = {}
    for l2 in (1e-4, 1.0):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ConvergenceWarning)
            p = np.clip(train_logreg(X[:40], y[:40], l2).predict_proba(X[40:]), 1e-12, 1 - 1e-12)
        losses[l2] = -np.mean(y[40:] * np.log(p) + (1 - y[40:]) * np.log(1 - p))
    assert chosen.l2 == min(losses, key=losses.get)
