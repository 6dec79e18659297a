"""CART-style trees: single classification tree, bagged forest, and the
regression tree used inside gradient boosting.

Splits are exact: candidate thresholds are midpoints between consecutive
distinct sorted values. Ties in gain resolve to the smaller threshold
value (and only then to scan order), which keeps fitting deterministic
and, because the key is content-based, makes fitted trees covariant under
feature-column permutations whenever gains and thresholds do not tie
simultaneously.
"""

from __future__ import annotations

import numpy as np

from dcsynth.rng import derive_seed, make_rng

_NO_SPLIT = (-1, 0.0, -np.inf)


class _Node:
    __slots__ = ("feature", "threshold", "left", "right", "value", "leaf_id")

    def __init__(self):
        self.feature = -1
        self.threshold = 0.0
        self.left = None
        self.right = None
        self.value = 0.0
        self.leaf_id = -1


def _route(node: _Node, features: np.ndarray) -> np.ndarray:
    """Leaf value for every row, iterative so depth never hits the recursion limit."""
    out = np.empty(features.shape[0])
    stack = [(node, np.arange(features.shape[0]))]
    while stack:
        nd, idx = stack.pop()
        if nd.left is None:
            out[idx] = nd.value
            continue
        mask = features[idx, nd.feature] <= nd.threshold
        stack.append((nd.left, idx[mask]))
        stack.append((nd.right, idx[~mask]))
    return out


def _route_leaf_ids(node: _Node, features: np.ndarray) -> np.ndarray:
    out = np.empty(features.shape[0], dtype=np.int64)
    stack = [(node, np.arange(features.shape[0]))]
    while stack:
        nd, idx = stack.pop()
        if nd.left is None:
            out[idx] = nd.leaf_id
            continue
        mask = features[idx, nd.feature] <= nd.threshold
        stack.append((nd.left, idx[mask]))
        stack.append((nd.right, idx[~mask]))
    return out


def _best_split_gini(x: np.ndarray, y: np.ndarray, min_leaf: int) -> tuple[float, float] | None:
    """Best threshold on one feature by weighted Gini; returns (threshold, child_impurity)."""
    m = x.size
    order = np.argsort(x, kind="mergesort")
    xs = x[order]
    ys = y[order]
    left_n = np.arange(1, m)
    valid = xs[1:] > xs[:-1]
    if min_leaf > 1:
        valid &= (left_n >= min_leaf) & (m - left_n >= min_leaf)
    if not valid.any():
        return None
    pos_left = np.cumsum(ys)[:-1].astype(np.float64)
    pos_right = float(ys.sum()) - pos_left
    right_n = (m - left_n).astype(np.float64)
    left_nf = left_n.astype(np.float64)
    child = (
        2.0 * pos_left * (left_nf - pos_left) / left_nf
        + 2.0 * pos_right * (right_n - pos_right) / right_n
    ) / m
    child[~valid] = np.inf
    b = int(np.argmin(child))
    return 0.5 * (xs[b] + xs[b + 1]), float(child[b])


def _best_split_sse(x: np.ndarray, r: np.ndarray, min_leaf: int) -> tuple[float, float] | None:
    """Best threshold on one feature by squared error; returns (threshold, child_sse)."""
    m = x.size
    order = np.argsort(x, kind="mergesort")
    xs = x[order]
    rs = r[order]
    left_n = np.arange(1, m)
    valid = xs[1:] > xs[:-1]
    if min_leaf > 1:
        valid &= (left_n >= min_leaf) & (m - left_n >= min_leaf)
    if not valid.any():
        return None
    cum = np.cumsum(rs)[:-1]
    cum2 = np.cumsum(rs * rs)[:-1]
    total = float(rs.sum())
    total2 = float(np.sum(rs * rs))
    left_nf = left_n.astype(np.float64)
    right_nf = (m - left_n).astype(np.float64)
    sse_left = cum2 - cum * cum / left_nf
    sse_right = (total2 - cum2) - (total - cum) ** 2 / right_nf
    child = sse_left + sse_right
    child[~valid] = np.inf
    b = int(np.argmin(child))
    return 0.5 * (xs[b] + xs[b + 1]), float(child[b])


class ClassificationTree:
    """Binary CART with Gini impurity; leaves hold the class-1 fraction."""

    def __init__(self, max_depth: int, min_leaf: int, max_features: int | None = None, rng=None):
        self.max_depth = max_depth
        self.min_leaf = min_leaf
        self.max_features = max_features
        self.rng = rng
        self.root: _Node | None = None
        self.importance_: np.ndarray | None = None

    def fit(self, features: np.ndarray, labels: np.ndarray) -> "ClassificationTree":
        n, d = features.shape
        self.importance_ = np.zeros(d)
        self.root = self._grow(features, labels, np.arange(n), depth=0, n_total=n)
        return self

    def _grow(self, X, y, idx, depth, n_total) -> _Node:
        node = _Node()
        m = idx.size
        n_pos = int(y[idx].sum())
        node.value = n_pos / m
        impurity = 2.0 * (n_pos / m) * (1.0 - n_pos / m)
        if depth >= self.max_depth or impurity == 0.0 or m < 2 * self.min_leaf:
            return node
        if self.max_features is not None and self.max_features < X.shape[1]:
            feature_ids = np.sort(self.rng.choice(X.shape[1], size=self.max_features, replace=False))
        else:
            feature_ids = range(X.shape[1])
        best_feature, best_threshold, best_child = -1, np.inf, np.inf
        for f in feature_ids:
            found = _best_split_gini(X[idx, f], y[idx], self.min_leaf)
            if found is None:
                continue
            threshold, child = found
            if child < best_child or (child == best_child and threshold < best_threshold):
                best_feature, best_threshold, best_child = f, threshold, child
        if best_feature < 0 or best_child >= impurity:
            return node
        self.importance_[best_feature] += (m / n_total) * (impurity - best_child)
        node.feature = best_feature
        node.threshold = best_threshold
        mask = X[idx, best_feature] <= best_threshold
        node.left = self._grow(X, y, idx[mask], depth + 1, n_total)
        node.right = self._grow(X, y, idx[~mask], depth + 1, n_total)
        return node

    def predict_proba(self, features: np.ndarray) -> np.ndarray:
        return _route(self.root, features)


class RegressionTree:
    """Squared-error CART over residual targets; leaves are re-valued by the caller."""

    def __init__(self, max_depth: int, min_leaf: int):
        self.max_depth = max_depth
        self.min_leaf = min_leaf
        self.root: _Node | None = None
        self.n_leaves = 0
        self.importance_: np.ndarray | None = None

    def fit(self, features: np.ndarray, residuals: np.ndarray) -> "RegressionTree":
        n, d = features.shape
        self.importance_ = np.zeros(d)
        self.n_leaves = 0
        self.root = self._grow(features, residuals, np.arange(n), depth=0)
        return self

    def _grow(self, X, r, idx, depth) -> _Node:
        node = _Node()
        m = idx.size
        r_node = r[idx]
        node.value = float(r_node.mean())
        sse = float(np.sum((r_node - r_node.mean()) ** 2))
        if depth >= self.max_depth or m < 2 * self.min_leaf or sse <= 1e-12:
            node.leaf_id = self.n_leaves
            self.n_leaves += 1
            return node
        best_feature, best_threshold, best_child = -1, np.inf, np.inf
        for f in range(X.shape[1]):
            found = _best_split_sse(X[idx, f], r_node, self.min_leaf)
            if found is None:
                continue
            threshold, child = found
            if child < best_child or (child == best_child and threshold < best_threshold):
                best_feature, best_threshold, best_child = f, threshold, child
        if best_feature < 0 or best_child >= sse:
            node.leaf_id = self.n_leaves
            self.n_leaves += 1
            return node
        self.importance_[best_feature] += sse - best_child
        node.feature = best_feature
        node.threshold = best_threshold
        mask = X[idx, best_feature] <= best_threshold
        node.left = self._grow(X, r, idx[mask], depth + 1)
        node.right = self._grow(X, r, idx[~mask], depth + 1)
        return node

    def leaf_ids(self, features: np.ndarray) -> np.ndarray:
        return _route_leaf_ids(self.root, features)

    def set_leaf_values(self, values: np.ndarray) -> None:
        stack = [self.root]
        while stack:
            nd = stack.pop()
            if nd.left is None:
                nd.value = float(values[nd.leaf_id])
            else:
                stack.extend((nd.left, nd.right))

    def predict(self, features: np.ndarray) -> np.ndarray:
        return _route(self.root, features)


class RandomForest:
    """Bagged Gini trees with per-node feature subsampling."""

    def __init__(self, n_trees: int, max_depth: int, min_leaf: int, seed: int):
        self.n_trees = n_trees
        self.max_depth = max_depth
        self.min_leaf = min_leaf
        self.seed = seed
        self.trees: list[ClassificationTree] = []
        self.importance_: np.ndarray | None = None

    def fit(self, features: np.ndarray, labels: np.ndarray) -> "RandomForest":
        n, d = features.shape
        mtry = max(1, int(round(np.sqrt(d))))
        self.trees = []
        self.importance_ = np.zeros(d)
        for t in range(self.n_trees):
            rng = make_rng(derive_seed(self.seed, "tree", t))
            boot = rng.integers(0, n, size=n)
            tree = ClassificationTree(self.max_depth, self.min_leaf, max_features=mtry, rng=rng)
            tree.fit(features[boot], labels[boot])
            self.trees.append(tree)
            self.importance_ += tree.importance_
        return self

    def predict_proba(self, features: np.ndarray) -> np.ndarray:
        total = np.zeros(features.shape[0])
        for tree in self.trees:
            total += tree.predict_proba(features)
        return total / self.n_trees
