"""Logistic regression via full-batch gradient descent.

Weights and bias start at zero, so the pre-update checkpoint predicts 0.5
for every row. The L2 penalty applies to weights only.
"""

from __future__ import annotations

import numpy as np


def sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


class LogisticCore:
    def __init__(self, learning_rate: float, n_iters: int, l2: float):
        self.learning_rate = learning_rate
        self.n_iters = n_iters
        self.l2 = l2
        self.weights: np.ndarray | None = None
        self.bias = 0.0

    def fit(self, X: np.ndarray, y: np.ndarray, checkpoint_iters=None):
        """Run gradient descent; optionally record probabilities at the given
        completed-iteration counts (returned as an (n, T) matrix of class-1
        probabilities on the training rows)."""
        n, d = X.shape
        w = np.zeros(d)
        b = 0.0
        yf = y.astype(np.float64)
        wanted = list(checkpoint_iters) if checkpoint_iters is not None else []
        recorded = {}
        for it in range(self.n_iters + 1):
            if it in wanted:
                recorded[it] = sigmoid(X @ w + b)
            if it == self.n_iters:
                break
            p = sigmoid(X @ w + b)
            err = p - yf
            w -= self.learning_rate * (X.T @ err / n + self.l2 * w)
            b -= self.learning_rate * float(err.mean())
        self.weights = w
        self.bias = b
        if checkpoint_iters is None:
            return None
        return np.column_stack([recorded[it] for it in wanted])

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return sigmoid(X @ self.weights + self.bias)
