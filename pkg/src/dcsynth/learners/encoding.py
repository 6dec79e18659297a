"""Feature encoding shared by the non-tree learners.

Tree-family learners consume categorical columns as raw integer codes, so
they skip encoding entirely. Logistic regression and kNN train on one-hot
expanded categoricals with every encoded column standardised; gaussian NB
uses the one-hot expansion without standardisation (it is per-feature
scale equivariant).
"""

from __future__ import annotations

import numpy as np

from dcsynth.data import KIND_CATEGORICAL, Dataset


class FeatureEncoder:
    """One-hot expansion of categorical columns plus optional standardisation."""

    def __init__(self, standardize: bool):
        self.standardize = standardize
        self.schema = None
        self.mean_ = None
        self.std_ = None
        # encoded column -> index of the original feature it came from
        self.origin_: np.ndarray | None = None

    def fit(self, data: Dataset) -> "FeatureEncoder":
        self.schema = data.schema
        encoded = self._expand(data.features)
        if self.standardize:
            self.mean_ = encoded.mean(axis=0)
            std = encoded.std(axis=0)
            std[std == 0.0] = 1.0
            self.std_ = std
        return self

    def transform(self, features: np.ndarray) -> np.ndarray:
        encoded = self._expand(features)
        if self.standardize:
            encoded = (encoded - self.mean_) / self.std_
        return encoded

    def _expand(self, features: np.ndarray) -> np.ndarray:
        blocks = []
        origin = []
        for col in self.schema:
            values = features[:, col.index]
            if col.kind == KIND_CATEGORICAL:
                codes = values.astype(np.int64)
                block = np.zeros((features.shape[0], col.cardinality))
                block[np.arange(features.shape[0]), codes] = 1.0
                blocks.append(block)
                origin.extend([col.index] * col.cardinality)
            else:
                blocks.append(values[:, None])
                origin.append(col.index)
        self.origin_ = np.asarray(origin, dtype=np.int64)
        return np.concatenate(blocks, axis=1)

    def fold_back(self, encoded_importance: np.ndarray) -> np.ndarray:
        """Sum per-encoded-column importances back to original features."""
        out = np.zeros(len(self.schema))
        np.add.at(out, self.origin_, encoded_importance)
        return out
