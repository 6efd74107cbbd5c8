"""Bag-of-words + L2-regularized logistic regression baseline."""
from __future__ import annotations

import logging
import warnings
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy import sparse

from . import tensor as T
from .tensor import Tensor

log = logging.getLogger(__name__)

L2_GRID = tuple(10.0 ** e for e in range(-4, 1))


class ConvergenceWarning(UserWarning):
    pass


@dataclass
class BowFeaturizer:
    words: list[str]

    def __post_init__(self):
        self.index = {w: i for i, w in enumerate(self.words)}

    def __len__(self) -> int:
        return len(self.words)

    @classmethod
    def fit(cls, texts: Iterable[str], max_features: int = 5000) -> "BowFeaturizer":
        """Keep the ``max_features`` most frequent words (count desc, then lexicographic)."""
        counts: Counter[str] = Counter()
        for t in texts:
            counts.update(t.split())
        ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
        return cls([w for w, _ in ranked[:max_features]])

    def featurize(self, text: str) -> dict[int, int]:
        """Raw in-vocabulary word counts as a ``{column: count}`` map."""
        out: dict[int, int] = {}
        for w in text.split():
            j = self.index.get(w)
            if j is not None:
                out[j] = out.get(j, 0) + 1
        return out

    def transform(self, texts: Sequence[str]) -> sparse.csr_matrix:
        rows, cols, vals = [], [], []
        for i, t in enumerate(texts):
            for j, c in self.featurize(t).items():
                rows.append(i)
                cols.append(j)
                vals.append(c)
        return sparse.csr_matrix((vals, (rows, cols)), shape=(len(texts), len(self)), dtype=np.float64)


@dataclass
class LogisticModel:
    weights: np.ndarray
    bias: float
    l2: float
    iterations: int
    grad_norm: float

    def decision_function(self, X) -> np.ndarray:
        return np.asarray(X @ self.weights).reshape(-1) + self.bias

    def predict_proba(self, X) -> np.ndarray:
        return T._sigmoid(self.decision_function(X))


def _objective(X: Tensor, y: np.ndarray, w: Tensor, b: Tensor, l2: float) -> Tensor:
    logits = (X @ w).reshape(X.shape[0]) + b
    return T.bce_with_logits(logits, y) + T.scale(T.sum_(w * w), l2)


def train_logreg(X, y, l2: float = 1e-2, max_iter: int = 5000, tol: float = 1e-6,
                 init: np.ndarray | None = None, step: float | None = None) -> LogisticModel:
    """Full-batch gradient descent on mean cross-entropy + ``l2 * ||w||^2`` (bias unpenalized).

    The default step is ``1 / L`` for the objective's gradient Lipschitz
    constant, which makes every iteration a descent step.
    """
    X = X.toarray() if sparse.issparse(X) else np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if set(np.unique(y)) != {0.0, 1.0}:
        raise ValueError("logistic regression needs both classes in the training labels")
    n, d = X.shape
    if step is None:
        sq_norm = np.linalg.norm(np.hstack([X, np.ones((n, 1))]), 2) ** 2
        step = 1.0 / (0.25 * sq_norm / n + 2.0 * l2)
    Xt = T.Tensor(X)
    w = T.parameter(np.zeros((d, 1)) if init is None else np.asarray(init, dtype=np.float64).reshape(d, 1))
    b = T.parameter(np.zeros(1))
    gnorm = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        T.zero_grads([w, b])
        _objective(Xt, y, w, b, l2).backward()
        gnorm = float(np.sqrt((w.grad ** 2).sum() + (b.grad ** 2).sum()))
        if gnorm < tol:
            break
        w.data -= step * w.grad
        b.data -= step * b.grad
    if gnorm >= tol:
        warnings.warn(f"logistic regression stopped after {it} iterations with gradient norm {gnorm:.3e}",
                      ConvergenceWarning, stacklevel=2)
    return LogisticModel(w.data.reshape(-1).copy(), float(b.data[0]), l2, it, gnorm)


def objective_value(model_or_w, X, y, l2: float, bias: float = 0.0) -> float:
    X = X.toarray() if sparse.issparse(X) else np.asarray(X, dtype=np.float64)
    w = model_or_w.weights if isinstance(model_or_w, LogisticModel) else np.asarray(model_or_w)
    b = model_or_w.bias if isinstance(model_or_w, LogisticModel) else bias
    with T.no_grad():
        return _objective(T.Tensor(X), np.asarray(y, float), T.Tensor(w.reshape(-1, 1)), T.Tensor([b]), l2).item()


def select_l2(X_train, y_train, X_val, y_val, grid: Sequence[float] = L2_GRID, **kw) -> LogisticModel:
    """Fit one model per grid value and keep the one with the lowest validation cross-entropy."""
    best, best_loss = None, np.inf
    for l2 in grid:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ConvergenceWarning)
            model = train_logreg(X_train, y_train, l2, **kw)
        p = np.clip(model.predict_proba(X_val), 1e-12, 1 - 1e-12)
        yv = np.asarray(y_val, dtype=np.float64)
        loss = float(-np.mean(yv * np.log(p) + (1 - yv) * np.log(1 - p)))
        log.info("l2 %.0e validation loss %.4f", l2, loss)
        if loss < best_loss:
            best, best_loss = model, loss
    return best
