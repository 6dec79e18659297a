"""Dataset container, CSV ingest, splitting, label noise, and simulation.

A :class:`Dataset` is a binary-labelled tabular sample: a float feature
matrix, an integer label vector in {0, 1}, and stable row identifiers.
Columns are typed continuous or categorical; categorical cells hold
integer codes in ``[0, cardinality)``. Arrays are marked read-only, so a
Dataset can be shared across threads and reused across pipeline stages;
every transformation returns a new instance.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from dcsynth.rng import make_rng

KIND_CONTINUOUS = "continuous"
KIND_CATEGORICAL = "categorical"

# columns with at most this many distinct all-integer values default to categorical
CATEGORICAL_MAX_DISTINCT = 20


class DataError(ValueError):
    """Invalid input data (malformed CSV, bad column, degenerate labels)."""


@dataclass(frozen=True)
class ColumnSchema:
    """Declared type of one feature column."""

    name: str
    kind: str
    index: int
    cardinality: int | None = None

    def __post_init__(self):
        if self.kind not in (KIND_CONTINUOUS, KIND_CATEGORICAL):
            raise DataError(f"unknown column kind {self.kind!r} for {self.name!r}")
        if self.kind == KIND_CATEGORICAL:
            if self.cardinality is None or self.cardinality < 1:
                raise DataError(f"categorical column {self.name!r} needs cardinality >= 1")
        elif self.cardinality is not None:
            raise DataError(f"continuous column {self.name!r} must not set cardinality")


@dataclass(frozen=True)
class Dataset:
    """Immutable tabular sample with binary labels and stable row ids."""

    schema: tuple[ColumnSchema, ...]
    features: np.ndarray
    labels: np.ndarray
    row_ids: np.ndarray

    def __post_init__(self):
        features = np.ascontiguousarray(np.asarray(self.features, dtype=np.float64))
        labels = np.asarray(self.labels, dtype=np.int64)
        row_ids = np.asarray(self.row_ids, dtype=np.int64)
        if features.ndim != 2:
            raise DataError("feature matrix must be 2-D")
        n, d = features.shape
        if labels.shape != (n,) or row_ids.shape != (n,):
            raise DataError("labels and row_ids must align with the feature matrix")
        if len(self.schema) != d:
            raise DataError(f"schema describes {len(self.schema)} columns, features have {d}")
        for i, col in enumerate(self.schema):
            if col.index != i:
                raise DataError(f"schema index mismatch at position {i}")
        if not np.isfinite(features).all():
            raise DataError("feature matrix contains non-finite values")
        if labels.size and not np.isin(labels, (0, 1)).all():
            raise DataError("labels must be 0 or 1")
        if np.unique(row_ids).size != n:
            raise DataError("row_ids must be unique")
        for col in self.schema:
            if col.kind != KIND_CATEGORICAL:
                continue
            codes = features[:, col.index]
            if codes.size == 0:
                continue
            if not (codes == np.floor(codes)).all():
                raise DataError(f"categorical column {col.name!r} has non-integer codes")
            if codes.min() < 0 or codes.max() >= col.cardinality:
                raise DataError(f"categorical column {col.name!r} has codes outside cardinality")
        for arr in (features, labels, row_ids):
            arr.setflags(write=False)
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "row_ids", row_ids)

    @property
    def n_rows(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def class_counts(self) -> tuple[int, int]:
        return int(np.sum(self.labels == 0)), int(np.sum(self.labels == 1))

    def subset(self, indices) -> "Dataset":
        """New Dataset from row positions (row ids are preserved)."""
        idx = np.asarray(indices)
        return Dataset(
            schema=self.schema,
            features=self.features[idx],
            labels=self.labels[idx],
            row_ids=self.row_ids[idx],
        )

    def with_labels(self, labels) -> "Dataset":
        return Dataset(self.schema, self.features, np.asarray(labels), self.row_ids)

    def feature_names(self) -> list[str]:
        return [col.name for col in self.schema]


@dataclass(frozen=True)
class SplitPair:
    """Disjoint train/test partition of one parent dataset."""

    train: Dataset
    test: Dataset
    train_fraction: float


@dataclass(frozen=True)
class NoiseInjection:
    """Record of a label-noise injection: which rows were flipped."""

    proportion: float
    flipped_ids: frozenset[int] = field(default_factory=frozenset)


def round_half_away(x: float) -> int:
    """Round half away from zero (2.5 -> 3, -2.5 -> -3)."""
    if x >= 0:
        return int(math.floor(x + 0.5))
    return int(math.ceil(x - 0.5))


def load_csv(
    path: str | Path,
    label_column: str,
    schema_hints: Mapping[str, str] | None = None,
) -> Dataset:
    """Load a headered CSV into a Dataset.

    The label column must contain exactly two distinct raw values; they map
    to {0, 1} by ascending lexical order. Feature columns must be numeric.
    A column whose values are all integers with at most
    ``CATEGORICAL_MAX_DISTINCT`` distinct levels is inferred categorical
    (codes are its sorted distinct values re-numbered 0..k-1) unless
    ``schema_hints`` overrides the kind for that column name.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such file: {path}")
    hints = dict(schema_hints or {})
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file, header row required") from None
        header = [h.strip() for h in header]
        if label_column not in header:
            raise DataError(f"{path}: label column {label_column!r} not in header {header}")
        rows = list(reader)
    for hint_col, hint_kind in hints.items():
        if hint_col not in header:
            raise DataError(f"schema hint for unknown column {hint_col!r}")
        if hint_kind not in (KIND_CONTINUOUS, KIND_CATEGORICAL):
            raise DataError(f"schema hint for {hint_col!r} must be continuous or categorical")
    if not rows:
        raise DataError(f"{path}: no data rows")

    label_idx = header.index(label_column)
    feature_names = [name for i, name in enumerate(header) if i != label_idx]
    raw_labels: list[str] = []
    columns: list[list[float]] = [[] for _ in feature_names]
    for r, row in enumerate(rows, start=2):  # header is line 1
        if len(row) != len(header):
            raise DataError(f"{path}:{r}: expected {len(header)} cells, got {len(row)}")
        j = 0
        for c, cell in enumerate(row):
            cell = cell.strip()
            if c == label_idx:
                if cell == "":
                    raise DataError(f"{path}:{r}: missing value in column {label_column!r}")
                raw_labels.append(cell)
                continue
            name = header[c]
            if cell == "":
                raise DataError(f"{path}:{r}: missing value in column {name!r}")
            try:
                value = float(cell)
            except ValueError:
                raise DataError(f"{path}:{r}: non-numeric cell {cell!r} in column {name!r}") from None
            if not math.isfinite(value):
                raise DataError(f"{path}:{r}: non-finite value in column {name!r}")
            columns[j].append(value)
            j += 1

    distinct_labels = sorted(set(raw_labels))
    if len(distinct_labels) != 2:
        raise DataError(
            f"{path}: label column {label_column!r} must have exactly 2 distinct values, "
            f"found {len(distinct_labels)}"
        )
    label_code = {distinct_labels[0]: 0, distinct_labels[1]: 1}
    labels = np.array([label_code[v] for v in raw_labels], dtype=np.int64)

    features = np.empty((len(rows), len(feature_names)), dtype=np.float64)
    schema: list[ColumnSchema] = []
    for j, name in enumerate(feature_names):
        values = np.asarray(columns[j], dtype=np.float64)
        distinct = np.unique(values)
        all_integer = bool((distinct == np.floor(distinct)).all())
        hinted = hints.get(name)
        if hinted == KIND_CATEGORICAL and not all_integer:
            raise DataError(f"column {name!r} hinted categorical but has non-integer values")
        categorical = (
            hinted == KIND_CATEGORICAL
            or (hinted is None and all_integer and distinct.size <= CATEGORICAL_MAX_DISTINCT)
        )
        if categorical:
            codes = np.searchsorted(distinct, values)
            features[:, j] = codes
            schema.append(ColumnSchema(name, KIND_CATEGORICAL, j, cardinality=distinct.size))
        else:
            features[:, j] = values
            schema.append(ColumnSchema(name, KIND_CONTINUOUS, j))

    return Dataset(tuple(schema), features, labels, np.arange(len(rows), dtype=np.int64))


def write_csv(data: Dataset, path: str | Path, label_column: str = "label") -> None:
    """Write a Dataset to CSV (feature columns then the label column)."""
    path = Path(path)
    is_cat = [col.kind == KIND_CATEGORICAL for col in data.schema]
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(data.feature_names() + [label_column])
        for i in range(data.n_rows):
            row = [
                str(int(v)) if cat else repr(float(v))
                for v, cat in zip(data.features[i], is_cat)
            ]
            row.append(str(int(data.labels[i])))
            writer.writerow(row)


def split_stratified(data: Dataset, train_fraction: float, seed: int) -> SplitPair:
    """Class-stratified random split.

    Each class contributes ``round(train_fraction * n_class)`` rows to the
    train side (half away from zero, clamped so a class with two or more
    rows lands on both sides). Assignment within a class is a seeded
    shuffle; the same seed reproduces the same split.
    """
    if not 0.0 < train_fraction < 1.0:
        raise DataError("train_fraction must be in (0, 1)")
    if data.n_rows < 2:
        raise DataError("need at least 2 rows to split")
    rng = make_rng(seed)
    train_parts: list[np.ndarray] = []
    test_parts: list[np.ndarray] = []
    for cls in (0, 1):
        cls_idx = np.flatnonzero(data.labels == cls)
        n_cls = cls_idx.size
        if n_cls == 0:
            continue
        n_train = round_half_away(train_fraction * n_cls)
        if n_cls == 1:
            n_train = 1
        else:
            n_train = min(max(n_train, 1), n_cls - 1)
        order = rng.permutation(n_cls)
        train_parts.append(cls_idx[order[:n_train]])
        test_parts.append(cls_idx[order[n_train:]])
    train_idx = np.sort(np.concatenate(train_parts))
    test_idx = np.sort(np.concatenate(test_parts)) if test_parts else np.array([], dtype=np.int64)
    return SplitPair(data.subset(train_idx), data.subset(test_idx), train_fraction)


def inject_label_noise(
    data: Dataset, proportion: float, seed: int
) -> tuple[Dataset, NoiseInjection]:
    """Flip labels of exactly round(proportion * n) uniformly chosen rows.

    The feature matrix is shared untouched with the input. Applying the
    same injection to the result restores the original labels.
    """
    if not 0.0 <= proportion <= 0.5:
        raise DataError("noise proportion must be in [0, 0.5]")
    n_flip = round_half_away(proportion * data.n_rows)
    if n_flip == 0:
        return data, NoiseInjection(proportion, frozenset())
    rng = make_rng(seed)
    positions = rng.choice(data.n_rows, size=n_flip, replace=False)
    labels = np.array(data.labels)
    labels[positions] = 1 - labels[positions]
    flipped = frozenset(int(i) for i in data.row_ids[positions])
    noisy = Dataset(data.schema, data.features, labels, data.row_ids)
    return noisy, NoiseInjection(proportion, flipped)


def simulate_dataset(
    n_features: int,
    n_samples: int,
    seed: int,
    rho: float | Sequence[float] | None = None,
) -> Dataset:
    """Simulate a binary-labelled Gaussian dataset with tunable correlations.

    Labels are Bernoulli(0.5). Each feature i has a signed correlation
    rho_i drawn uniformly from (-0.7, 0.7) unless ``rho`` pins it, and is
    generated as ``rho_i * z + sqrt(1 - rho_i^2) * eps`` with z = 2y - 1
    and eps standard normal, so marginal variance stays 1 regardless of
    rho.
    """
    if n_features < 1 or n_samples < 1:
        raise DataError("n_features and n_samples must be positive")
    rng = make_rng(seed)
    labels = rng.integers(0, 2, size=n_samples).astype(np.int64)
    if rho is None:
        rhos = rng.uniform(-0.7, 0.7, size=n_features)
    else:
        rhos = np.broadcast_to(np.asarray(rho, dtype=np.float64), (n_features,)).copy()
        if np.abs(rhos).max() >= 1.0:
            raise DataError("|rho| must be < 1")
    z = (2 * labels - 1).astype(np.float64)
    eps = rng.standard_normal((n_samples, n_features))
    features = rhos[None, :] * z[:, None] + np.sqrt(1.0 - rhos**2)[None, :] * eps
    schema = tuple(
        ColumnSchema(f"f{j}", KIND_CONTINUOUS, j) for j in range(n_features)
    )
    return Dataset(schema, features, labels, np.arange(n_samples, dtype=np.int64))


def combine(datasets: Iterable[Dataset], row_ids: np.ndarray | None = None) -> Dataset:
    """Stack datasets with a shared schema into one (fresh row ids by default)."""
    parts = list(datasets)
    if not parts:
        raise DataError("cannot combine zero datasets")
    schema = parts[0].schema
    for part in parts[1:]:
        if part.schema != schema:
            raise DataError("cannot combine datasets with different schemas")
    features = np.concatenate([p.features for p in parts], axis=0)
    labels = np.concatenate([p.labels for p in parts])
    if row_ids is None:
        row_ids = np.arange(features.shape[0], dtype=np.int64)
    return Dataset(schema, features, labels, row_ids)
