"""L2-regularised logistic regression fitted by gradient descent."""

from __future__ import annotations

import numpy as np


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def loss_and_grad(params: np.ndarray, X: np.ndarray, y: np.ndarray, C: float) -> tuple[float, np.ndarray]:
    """Mean log-loss plus ``||w||^2 / (2 C n)``; the intercept is not penalised.

    ``params`` is ``[w_1 .. w_p, b]``. Scaling the usual ``C * sum(loss) +
    ||w||^2 / 2`` objective by ``1 / (C n)`` keeps the minimiser and makes the
    step size independent of the row count.
    """
    n = X.shape[0]
    w, b = params[:-1], params[-1]
    z = X @ w + b
    loss = np.mean(np.logaddexp(0.0, z) - y * z) + w @ w / (2.0 * C * n)
    r = (_sigmoid(z) - y) / n
    grad = np.empty_like(params)
    grad[:-1] = X.T @ r + w / (C * n)
    grad[-1] = r.sum()
    return float(loss), grad


def fit_binary(X: np.ndarray, y: np.ndarray, C: float = 1.0, max_iter: int = 1000, tol: float = 1e-4):
    """Backtracking (Armijo) gradient descent; returns ``(params, n_iter, converged)``."""
    params = np.zeros(X.shape[1] + 1)
    loss, grad = loss_and_grad(params, X, y, C)
    step = 1.0
    for it in range(1, max_iter + 1):
        if np.max(np.abs(grad)) < tol:
            return params, it - 1, True
        gg = grad @ grad
        step *= 2.0
        while True:
            cand = params - step * grad
            cand_loss, cand_grad = loss_and_grad(cand, X, y, C)
            if cand_loss <= loss - 0.5 * step * gg or step < 1e-12:
                break
            step *= 0.5
        params, loss, grad = cand, cand_loss, cand_grad
    return params, max_iter, bool(np.max(np.abs(grad)) < tol)


class LogisticRegression:
    """One-vs-rest for more than two classes; inputs are z-scored internally."""

    def __init__(self, C=1.0, max_iter=1000, tol=1e-4, standardize=True):
        if C <= 0:
            raise ValueError("regularisation strength must be positive")
        self.C = C
        self.max_iter = max_iter
        self.tol = tol
        self.standardize = standardize

    def _scale(self, X):
        return (X - self.mean_) / self.scale_

    def fit(self, X: np.ndarray, y: np.ndarray, n_classes: int) -> "LogisticRegression":
        if self.standardize:
            self.mean_ = X.mean(axis=0)
            scale = X.std(axis=0)
            scale[scale == 0] = 1.0
            self.scale_ = scale
        else:
            self.mean_ = np.zeros(X.shape[1])
            self.scale_ = np.ones(X.shape[1])
        Z = self._scale(X)
        targets = [1] if n_classes == 2 else range(n_classes)
        self.params_ = []
        self.n_iter_ = []
        for k in targets:
            params, n_iter, _ = fit_binary(Z, (y == k).astype(np.float64), self.C, self.max_iter, self.tol)
            self.params_.append(params)
            self.n_iter_.append(n_iter)
        self.n_classes_ = n_classes
        return self

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        Z = self._scale(X)
        scores = np.column_stack([_sigmoid(Z @ p[:-1] + p[-1]) for p in self.params_])
        if self.n_classes_ == 2:
            return np.column_stack([1 - scores[:, 0], scores[:, 0]])
        return scores
