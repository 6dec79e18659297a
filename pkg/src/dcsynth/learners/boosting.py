"""Gradient boosting for binary classification with logistic loss.

Each round fits a squared-error regression tree to the residuals y - p and
re-values its leaves with a Newton step (sum of residuals over sum of
p(1-p)). Staged probabilities (the model's output after each round) are
available both during fitting (for checkpoint traces) and at prediction.
"""

from __future__ import annotations

import numpy as np

from dcsynth.learners.linear import sigmoid
from dcsynth.learners.trees import RegressionTree

_HESS_EPS = 1e-12
_PRIOR_CLIP = 1e-12


class BoostingCore:
    def __init__(self, n_rounds: int, max_depth: int, learning_rate: float, min_leaf: int = 1):
        self.n_rounds = n_rounds
        self.max_depth = max_depth
        self.learning_rate = learning_rate
        self.min_leaf = min_leaf
        self.base_score = 0.0
        self.trees: list[RegressionTree] = []
        self.importance_: np.ndarray | None = None

    def fit(self, X: np.ndarray, y: np.ndarray, checkpoint_rounds=None):
        """Boost for n_rounds; optionally record training-row probabilities
        after each completed-round count in ``checkpoint_rounds``."""
        n, d = X.shape
        yf = y.astype(np.float64)
        prior = float(np.clip(yf.mean(), _PRIOR_CLIP, 1.0 - _PRIOR_CLIP))
        self.base_score = float(np.log(prior / (1.0 - prior)))
        self.trees = []
        self.importance_ = np.zeros(d)
        wanted = list(checkpoint_rounds) if checkpoint_rounds is not None else []
        recorded = {}
        raw = np.full(n, self.base_score)
        for r in range(self.n_rounds + 1):
            if r in wanted:
                recorded[r] = sigmoid(raw)
            if r == self.n_rounds:
                break
            p = sigmoid(raw)
            residual = yf - p
            hessian = p * (1.0 - p)
            tree = RegressionTree(self.max_depth, self.min_leaf)
            tree.fit(X, residual)
            leaf = tree.leaf_ids(X)
            num = np.bincount(leaf, weights=residual, minlength=tree.n_leaves)
            den = np.bincount(leaf, weights=hessian, minlength=tree.n_leaves)
            tree.set_leaf_values(num / (den + _HESS_EPS))
            self.trees.append(tree)
            self.importance_ += tree.importance_
            raw += self.learning_rate * tree.predict(X)
        if checkpoint_rounds is None:
            return None
        return np.column_stack([recorded[r] for r in wanted])

    def decision_function(self, X: np.ndarray, n_rounds: int | None = None) -> np.ndarray:
        use = self.trees if n_rounds is None else self.trees[:n_rounds]
        raw = np.full(X.shape[0], self.base_score)
        for tree in use:
            raw += self.learning_rate * tree.predict(X)
        return raw

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return sigmoid(self.decision_function(X))

    def staged_proba(self, X: np.ndarray, rounds) -> np.ndarray:
        """Probabilities after each completed-round count in ``rounds`` (m, T)."""
        raw = np.full(X.shape[0], self.base_score)
        wanted = sorted(set(int(r) for r in rounds))
        out = {}
        done = 0
        for r in wanted:
            while done < r:
                raw = raw + self.learning_rate * self.trees[done].predict(X)
                done += 1
            out[r] = sigmoid(raw)
        return np.column_stack([out[int(r)] for r in rounds])
