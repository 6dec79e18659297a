"""From-scratch binary classifiers behind a single spec/train surface.

Six kinds are available, each with fixed documented defaults:

- ``logistic_regression``: full-batch gradient descent, learning rate 0.1,
  200 iterations, L2 1e-4, standardised one-hot features.
- ``decision_tree``: Gini CART, depth 8, min leaf 5, categoricals as codes.
- ``random_forest``: 100 bagged trees, depth 12, sqrt(d) features per split.
- ``gaussian_nb``: per-class diagonal Gaussians, variance floor 1e-9.
- ``knn``: k=5, Euclidean distance on standardised one-hot features.
- ``gradient_boosting``: 100 rounds of depth-3 trees, learning rate 0.1,
  logistic loss, staged probability output.

``train_with_checkpoints`` (logistic_regression and gradient_boosting
only) exposes the model's training trajectory: probabilities of each
sample's own label at evenly spaced points over the training iterations,
with checkpoint 0 taken before any update and the last checkpoint equal to
the returned model.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from dcsynth.data import Dataset
from dcsynth.learners.boosting import BoostingCore
from dcsynth.learners.encoding import FeatureEncoder
from dcsynth.learners.linear import LogisticCore
from dcsynth.learners.simple import GaussianNBCore, KNNCore
from dcsynth.learners.trees import ClassificationTree, RandomForest
from dcsynth.rng import derive_seed, make_rng


class LearnerError(ValueError):
    """Invalid learner configuration or unusable training data."""


DEFAULTS: dict[str, dict[str, float]] = {
    "logistic_regression": {"learning_rate": 0.1, "n_iters": 200, "l2": 1e-4},
    "decision_tree": {"max_depth": 8, "min_leaf": 5},
    "random_forest": {"n_trees": 100, "max_depth": 12, "min_leaf": 1},
    "gaussian_nb": {"var_floor": 1e-9},
    "knn": {"k": 5},
    "gradient_boosting": {"n_rounds": 100, "max_depth": 3, "learning_rate": 0.1, "min_leaf": 1},
}

ROSTER_KINDS = tuple(DEFAULTS)
CHECKPOINT_KINDS = ("logistic_regression", "gradient_boosting")
IMPORTANCE_KINDS = ("logistic_regression", "decision_tree", "random_forest", "gradient_boosting")

# (minimum, strict) per parameter; integer-valued ones are also checked below
_PARAM_RANGES = {
    "learning_rate": (0.0, True),
    "n_iters": (1, False),
    "l2": (0.0, False),
    "max_depth": (1, False),
    "min_leaf": (1, False),
    "n_trees": (1, False),
    "var_floor": (0.0, True),
    "k": (1, False),
    "n_rounds": (1, False),
}
_INT_PARAMS = {"n_iters", "max_depth", "min_leaf", "n_trees", "k", "n_rounds"}


@dataclass(frozen=True)
class ClassifierSpec:
    """A classifier kind plus seed and optional hyperparameter overrides."""

    kind: str
    seed: int = 0
    params: tuple[tuple[str, float], ...] = ()

    def __post_init__(self):
        if self.kind not in DEFAULTS:
            raise LearnerError(f"unknown classifier kind {self.kind!r}")
        for name, value in self.params:
            if name not in DEFAULTS[self.kind]:
                raise LearnerError(f"{self.kind} has no hyperparameter {name!r}")
            minimum, strict = _PARAM_RANGES[name]
            ok = value > minimum if strict else value >= minimum
            if not ok:
                raise LearnerError(f"{name}={value} out of range for {self.kind}")
            if name in _INT_PARAMS and int(value) != value:
                raise LearnerError(f"{name} must be an integer")

    @classmethod
    def make(cls, kind: str, seed: int = 0, **params) -> "ClassifierSpec":
        return cls(kind, seed, tuple(sorted(params.items())))

    def resolved(self) -> dict[str, float]:
        merged = dict(DEFAULTS[self.kind])
        merged.update(dict(self.params))
        return merged


@dataclass
class TrainedClassifier:
    """A fitted model bound to the schema it was trained on."""

    spec: ClassifierSpec
    schema: tuple
    core: object
    encoder: FeatureEncoder | None = None

    def predict_proba(self, features: np.ndarray) -> np.ndarray:
        features = np.asarray(features, dtype=np.float64)
        if features.ndim != 2 or features.shape[1] != len(self.schema):
            raise LearnerError(
                f"expected {len(self.schema)} feature columns, got shape {features.shape}"
            )
        encoded = self.encoder.transform(features) if self.encoder else features
        probs = self.core.predict_proba(encoded)
        return np.clip(probs, 0.0, 1.0)


@dataclass
class CheckpointTrace:
    """Per-sample probability of the sample's own label at each checkpoint."""

    probs: np.ndarray
    checkpoint_iters: tuple[int, ...]

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=np.float64)
        probs.setflags(write=False)
        self.probs = probs

    @property
    def n_checkpoints(self) -> int:
        return self.probs.shape[1]


def _check_trainable(data: Dataset) -> None:
    n0, n1 = data.class_counts()
    if n0 == 0 or n1 == 0:
        raise LearnerError("training data must contain both classes")


def _build(spec: ClassifierSpec, data: Dataset, checkpoint_iters=None):
    p = spec.resolved()
    kind = spec.kind
    trace = None
    if kind == "logistic_regression":
        encoder = FeatureEncoder(standardize=True).fit(data)
        core = LogisticCore(p["learning_rate"], int(p["n_iters"]), p["l2"])
        trace = core.fit(encoder.transform(data.features), data.labels, checkpoint_iters)
    elif kind == "gradient_boosting":
        encoder = None
        core = BoostingCore(int(p["n_rounds"]), int(p["max_depth"]), p["learning_rate"], int(p["min_leaf"]))
        trace = core.fit(data.features, data.labels, checkpoint_iters)
    elif kind == "decision_tree":
        encoder = None
        core = ClassificationTree(int(p["max_depth"]), int(p["min_leaf"]))
        core.fit(data.features, data.labels)
    elif kind == "random_forest":
        encoder = None
        core = RandomForest(int(p["n_trees"]), int(p["max_depth"]), int(p["min_leaf"]), spec.seed)
        core.fit(data.features, data.labels)
    elif kind == "gaussian_nb":
        encoder = FeatureEncoder(standardize=False).fit(data)
        core = GaussianNBCore(p["var_floor"]).fit(encoder.transform(data.features), data.labels)
    elif kind == "knn":
        if data.n_rows < int(p["k"]):
            raise LearnerError(f"knn needs at least k={int(p['k'])} training rows")
        encoder = FeatureEncoder(standardize=True).fit(data)
        core = KNNCore(int(p["k"])).fit(encoder.transform(data.features), data.labels)
    else:  # pragma: no cover - guarded by ClassifierSpec
        raise LearnerError(f"unknown classifier kind {kind!r}")
    return TrainedClassifier(spec, data.schema, core, encoder), trace


def train(spec: ClassifierSpec, data: Dataset) -> TrainedClassifier:
    """Fit one classifier; deterministic given (spec, data)."""
    _check_trainable(data)
    model, _ = _build(spec, data)
    return model


def predict_proba(model: TrainedClassifier, features: np.ndarray) -> np.ndarray:
    """Class-1 probability for each row of ``features``."""
    return model.predict_proba(features)


def _checkpoint_schedule(n_iters: int, n_checkpoints: int) -> tuple[int, ...]:
    # evenly spaced completed-iteration counts from 0 (pre-update) to n_iters
    step = n_iters / (n_checkpoints - 1)
    return tuple(int(np.floor(t * step + 0.5)) for t in range(n_checkpoints))


def train_with_checkpoints(
    spec: ClassifierSpec, data: Dataset, n_checkpoints: int
) -> tuple[TrainedClassifier, CheckpointTrace]:
    """Fit a checkpointable kind and record its training trajectory.

    Returns the final model plus an (n, T) trace where entry (i, t) is the
    probability the checkpoint-t model assigns to sample i's own label.
    """
    _check_trainable(data)
    if spec.kind not in CHECKPOINT_KINDS:
        raise LearnerError(f"{spec.kind} does not support checkpoint traces")
    if n_checkpoints < 2:
        raise LearnerError("need at least 2 checkpoints")
    p = spec.resolved()
    total = int(p["n_iters"] if spec.kind == "logistic_regression" else p["n_rounds"])
    if n_checkpoints > total + 1:
        raise LearnerError(f"{n_checkpoints} checkpoints exceed {total} training iterations")
    schedule = _checkpoint_schedule(total, n_checkpoints)
    model, probs = _build(spec, data, checkpoint_iters=schedule)
    own = np.where(data.labels[:, None] == 1, probs, 1.0 - probs)
    return model, CheckpointTrace(own, schedule)


def stratified_folds(labels: np.ndarray, n_folds: int, seed: int) -> np.ndarray:
    """Fold id per row: a seeded shuffle within each class, dealt round-robin."""
    labels = np.asarray(labels)
    if n_folds < 2:
        raise LearnerError("need at least 2 folds")
    rng = make_rng(derive_seed(seed, "stratified_folds"))
    folds = np.empty(labels.shape[0], dtype=np.int64)
    for cls in (0, 1):
        cls_idx = np.flatnonzero(labels == cls)
        if cls_idx.size < n_folds:
            raise LearnerError(f"class {cls} has {cls_idx.size} rows, fewer than {n_folds} folds")
        shuffled = cls_idx[rng.permutation(cls_idx.size)]
        folds[shuffled] = np.arange(shuffled.size) % n_folds
    return folds


def out_of_fold_proba(spec: ClassifierSpec, data: Dataset, n_folds: int, seed: int) -> np.ndarray:
    """(n, 2) class-probability matrix where each row was predicted by the
    fold model that never saw it; rows sum to 1."""
    _check_trainable(data)
    folds = stratified_folds(data.labels, n_folds, seed)
    out = np.empty((data.n_rows, 2))
    for f in range(n_folds):
        held = folds == f
        model = train(spec, data.subset(np.flatnonzero(~held)))
        p1 = model.predict_proba(data.features[held])
        out[held, 0] = 1.0 - p1
        out[held, 1] = p1
    return out


def feature_importance(model: TrainedClassifier) -> np.ndarray:
    """Nonnegative importance per original feature, normalised to sum 1.

    Tree-family kinds use accumulated impurity decrease; logistic
    regression uses coefficient magnitude on the standardised design (the
    coefficient already absorbs the feature scale), folded back over
    one-hot blocks. A model with no splits/signal falls back to uniform.
    """
    kind = model.spec.kind
    if kind not in IMPORTANCE_KINDS:
        raise LearnerError(f"{kind} has no feature importances")
    if kind == "logistic_regression":
        raw = model.encoder.fold_back(np.abs(model.core.weights))
    else:
        raw = np.array(model.core.importance_, dtype=np.float64)
    total = raw.sum()
    if total <= 0.0:
        return np.full(raw.size, 1.0 / raw.size)
    return raw / total
