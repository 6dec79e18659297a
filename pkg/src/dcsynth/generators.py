"""Lightweight tabular generators and profile-segmented sampling.

Three generator families cover complementary modelling assumptions:

* ``chow_liu_bn``: a tree-shaped Bayesian network over quantile-discretized
  features plus the label, learned by maximum-weight spanning tree on
  pairwise mutual information, sampled ancestrally label-first.
* ``gmm``: per-class diagonal-covariance Gaussian mixtures fit by EM over
  the continuous columns; categorical columns use per-class smoothed
  frequency tables.
* ``marginal_hist``: per-class, per-feature independent histograms, the
  independence baseline.

Fitted generators are immutable, sample deterministically from a seed, and
serialize to a versioned JSON document.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from dcsynth.data import (
    KIND_CATEGORICAL,
    KIND_CONTINUOUS,
    ColumnSchema,
    Dataset,
)
from dcsynth.rng import derive_seed, make_rng

log = logging.getLogger(__name__)

KINDS = ("chow_liu_bn", "gmm", "marginal_hist")

_FORMAT_SINGLE = "dcsynth-generator"
_FORMAT_SEGMENTED = "dcsynth-segmented-generator"
_FORMAT_VERSION = 1

_VAR_FLOOR = 1e-6
_EM_MAX_ITER = 200
_EM_TOL = 1e-6


class GeneratorError(ValueError):
    """Invalid generator configuration or unusable training data."""


@dataclass(frozen=True)
class GeneratorSpec:
    """Configuration for one generator family.

    ``bins`` applies to chow_liu_bn and marginal_hist, ``components`` to
    gmm, ``smoothing`` is the Laplace pseudo-count used wherever counts
    become probabilities.
    """

    kind: str
    bins: int = 8
    components: int = 3
    smoothing: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise GeneratorError(
                f"unknown generator kind {self.kind!r}; expected one of {', '.join(KINDS)}"
            )
        if self.bins < 2:
            raise GeneratorError("bins must be at least 2")
        if self.components < 1:
            raise GeneratorError("components must be at least 1")
        if not self.smoothing > 0:
            raise GeneratorError("smoothing must be positive")


@dataclass(frozen=True)
class FittedGenerator:
    """A trained generator: spec echo, schema, empirical prior, parameters.

    ``params`` is a JSON-ready nested structure (lists, dicts, scalars);
    treat it as read-only.
    """

    spec: GeneratorSpec
    schema: tuple[ColumnSchema, ...]
    class_prior: float
    params: dict

    def sample(self, n: int, seed: int) -> Dataset:
        return sample(self, n, seed)


@dataclass(frozen=True)
class Segment:
    tag: str
    generator: FittedGenerator
    fraction: float


@dataclass(frozen=True)
class SegmentedGenerator:
    """One generator per profile segment with the training size fractions."""

    segments: tuple[Segment, ...]

    def __post_init__(self):
        if not self.segments:
            raise GeneratorError("a segmented generator needs at least one segment")
        for seg in self.segments:
            if not seg.fraction > 0:
                raise GeneratorError(f"segment {seg.tag!r} has non-positive fraction")
        total = sum(seg.fraction for seg in self.segments)
        if abs(total - 1.0) > 1e-9:
            raise GeneratorError(f"segment fractions sum to {total}, expected 1")

    def sample(self, n: int, seed: int) -> Dataset:
        return sample_segmented(self, n, seed)


# ---------------------------------------------------------------------------
# quantile discretization shared by chow_liu_bn and marginal_hist


def _quantile_edges(values: np.ndarray, bins: int) -> np.ndarray:
    """Edges of ``bins`` equal-mass bins; duplicates collapse the grid."""
    edges = np.unique(np.quantile(values, np.linspace(0.0, 1.0, bins + 1)))
    if edges.size == 1:
        edges = np.array([edges[0], edges[0]])
    return edges


def _bin_codes(values: np.ndarray, edges: np.ndarray) -> np.ndarray:
    # interior edges partition [min, max]; the top bin is right-closed
    return np.searchsorted(edges[1:-1], values, side="right")


def _draw_iid(probs: np.ndarray, u: np.ndarray) -> np.ndarray:
    cum = np.cumsum(probs)
    return np.minimum((cum[None, :] < u[:, None]).sum(axis=1), probs.size - 1)


def _draw_rows(prob_rows: np.ndarray, u: np.ndarray) -> np.ndarray:
    cum = np.cumsum(prob_rows, axis=1)
    return np.minimum((cum < u[:, None]).sum(axis=1), prob_rows.shape[1] - 1)


def _dedisc(edges: np.ndarray, codes: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    lower = edges[codes]
    upper = edges[codes + 1]
    return lower + rng.random(codes.shape[0]) * (upper - lower)


# ---------------------------------------------------------------------------
# chow_liu_bn


def _mutual_information(codes_a, arity_a, codes_b, arity_b, alpha) -> float:
    counts = np.bincount(
        codes_a * arity_b + codes_b, minlength=arity_a * arity_b
    ).reshape(arity_a, arity_b).astype(np.float64)
    counts += alpha
    joint = counts / counts.sum()
    pa = joint.sum(axis=1, keepdims=True)
    pb = joint.sum(axis=0, keepdims=True)
    return float(np.sum(joint * np.log(joint / (pa * pb))))


def _max_spanning_tree(weights: np.ndarray, root: int) -> list[int]:
    """Prim from the root; returns parent per node (root gets -1).

    Ties break on weight first, then the smaller outside node, then the
    smaller inside node, so the tree depends only on the weight matrix.
    """
    m = weights.shape[0]
    parent = [-2] * m
    parent[root] = -1
    inside = [root]
    while len(inside) < m:
        best = None
        for v in range(m):
            if parent[v] != -2:
                continue
            for u in inside:
                w = weights[u, v]
                if best is None or w > best[0] or (w == best[0] and (v, u) < (best[1], best[2])):
                    best = (w, v, u)
        parent[best[1]] = best[2]
        inside.append(best[1])
    return parent


def _fit_bn(spec: GeneratorSpec, data: Dataset) -> dict:
    n, d = data.features.shape
    alpha = spec.smoothing
    codes = np.empty((n, d + 1), dtype=np.int64)
    arity = [0] * (d + 1)
    edges_per_col: list[list[float] | None] = [None] * d
    for col in data.schema:
        values = data.features[:, col.index]
        if col.kind == KIND_CONTINUOUS:
            edges = _quantile_edges(values, spec.bins)
            codes[:, col.index] = _bin_codes(values, edges)
            arity[col.index] = edges.size - 1
            edges_per_col[col.index] = edges.tolist()
        else:
            codes[:, col.index] = values.astype(np.int64)
            arity[col.index] = col.cardinality
    codes[:, d] = data.labels
    arity[d] = 2

    weights = np.zeros((d + 1, d + 1))
    for a in range(d + 1):
        for b in range(a + 1, d + 1):
            mi = _mutual_information(codes[:, a], arity[a], codes[:, b], arity[b], alpha)
            weights[a, b] = weights[b, a] = mi
    parent = _max_spanning_tree(weights, root=d)

    # breadth-first order from the root fixes the sampling sequence
    children: list[list[int]] = [[] for _ in range(d + 1)]
    for v, p in enumerate(parent):
        if p >= 0:
            children[p].append(v)
    order = [d]
    cursor = 0
    while cursor < len(order):
        order.extend(children[order[cursor]])
        cursor += 1

    cpt: list[object] = [None] * (d + 1)
    for v in range(d + 1):
        p = parent[v]
        if p == -1:
            counts = np.bincount(codes[:, v], minlength=arity[v]).astype(np.float64) + alpha
            cpt[v] = (counts / counts.sum()).tolist()
        else:
            counts = np.bincount(
                codes[:, p] * arity[v] + codes[:, v], minlength=arity[p] * arity[v]
            ).reshape(arity[p], arity[v]).astype(np.float64) + alpha
            cpt[v] = (counts / counts.sum(axis=1, keepdims=True)).tolist()
    return {
        "arity": arity,
        "parent": parent,
        "order": order,
        "cpt": cpt,
        "edges": edges_per_col,
    }


def _sample_bn(gen: FittedGenerator, n: int, rng: np.random.Generator):
    params = gen.params
    d = len(gen.schema)
    parent = params["parent"]
    values: dict[int, np.ndarray] = {}
    for node in params["order"]:
        if parent[node] == -1:
            values[node] = _draw_iid(np.asarray(params["cpt"][node]), rng.random(n))
        else:
            table = np.asarray(params["cpt"][node])
            values[node] = _draw_rows(table[values[parent[node]]], rng.random(n))
    features = np.empty((n, d), dtype=np.float64)
    for col in gen.schema:
        if col.kind == KIND_CONTINUOUS:
            edges = np.asarray(params["edges"][col.index])
            features[:, col.index] = _dedisc(edges, values[col.index], rng)
        else:
            features[:, col.index] = values[col.index].astype(np.float64)
    return features, values[d].astype(np.int64)


# ---------------------------------------------------------------------------
# gmm


def _fit_mixture(X: np.ndarray, k: int, seed: int):
    """Diagonal-covariance EM with k-means++-style seeding."""
    n, d = X.shape
    k = min(k, n)
    rng = make_rng(seed)
    centers = np.empty((k, d))
    centers[0] = X[rng.integers(n)]
    d2 = ((X - centers[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = d2.sum()
        idx = rng.integers(n) if total <= 0 else rng.choice(n, p=d2 / total)
        centers[j] = X[idx]
        d2 = np.minimum(d2, ((X - centers[j]) ** 2).sum(axis=1))

    means = centers.copy()
    variances = np.tile(np.maximum(X.var(axis=0), _VAR_FLOOR), (k, 1))
    weights = np.full(k, 1.0 / k)
    prev = -np.inf
    for _ in range(_EM_MAX_ITER):
        diff = X[:, None, :] - means[None, :, :]
        log_comp = -0.5 * (
            d * math.log(2.0 * math.pi)
            + np.log(variances).sum(axis=1)[None, :]
            + (diff**2 / variances[None, :, :]).sum(axis=2)
        )
        log_joint = log_comp + np.log(np.maximum(weights, 1e-300))[None, :]
        top = log_joint.max(axis=1, keepdims=True)
        log_norm = top[:, 0] + np.log(np.exp(log_joint - top).sum(axis=1))
        ll = float(log_norm.mean())
        resp = np.exp(log_joint - log_norm[:, None])
        nk = np.maximum(resp.sum(axis=0), 1e-12)
        weights = resp.sum(axis=0) / n
        means = (resp.T @ X) / nk[:, None]
        variances = np.maximum((resp.T @ (X**2)) / nk[:, None] - means**2, _VAR_FLOOR)
        if abs(ll - prev) < _EM_TOL:
            break
        prev = ll
    return weights.tolist(), means.tolist(), variances.tolist()


def _fit_gmm(spec: GeneratorSpec, data: Dataset) -> dict:
    cont = [c.index for c in data.schema if c.kind == KIND_CONTINUOUS]
    cat = [c.index for c in data.schema if c.kind == KIND_CATEGORICAL]
    classes: dict[str, dict] = {}
    for c in (0, 1):
        rows = data.features[data.labels == c]
        if rows.shape[0] == 0:
            continue
        entry: dict = {}
        if cont:
            w, m, v = _fit_mixture(
                rows[:, cont], spec.components, derive_seed(spec.seed, "gmm", c)
            )
            entry.update({"weights": w, "means": m, "vars": v})
        tables = {}
        for idx in cat:
            card = data.schema[idx].cardinality
            counts = np.bincount(rows[:, idx].astype(np.int64), minlength=card)
            probs = (counts + spec.smoothing) / (counts.sum() + spec.smoothing * card)
            tables[str(idx)] = probs.tolist()
        entry["tables"] = tables
        classes[str(c)] = entry
    return {"continuous": cont, "categorical": cat, "classes": classes}


def _sample_gmm(gen: FittedGenerator, n: int, rng: np.random.Generator):
    params = gen.params
    d = len(gen.schema)
    labels = (rng.random(n) < gen.class_prior).astype(np.int64)
    features = np.empty((n, d), dtype=np.float64)
    cont = params["continuous"]
    for c in (0, 1):
        mask = labels == c
        m = int(mask.sum())
        if m == 0:
            continue
        entry = params["classes"][str(c)]
        if cont:
            weights = np.asarray(entry["weights"])
            means = np.asarray(entry["means"])
            variances = np.asarray(entry["vars"])
            comp = _draw_iid(weights, rng.random(m))
            z = rng.standard_normal((m, len(cont)))
            draws = means[comp] + z * np.sqrt(variances[comp])
            features[np.ix_(mask, cont)] = draws
        for idx in params["categorical"]:
            probs = np.asarray(entry["tables"][str(idx)])
            features[mask, idx] = _draw_iid(probs, rng.random(m)).astype(np.float64)
    return features, labels


# ---------------------------------------------------------------------------
# marginal_hist


def _fit_hist(spec: GeneratorSpec, data: Dataset) -> dict:
    classes: dict[str, dict] = {}
    for c in (0, 1):
        rows = data.features[data.labels == c]
        if rows.shape[0] == 0:
            continue
        per_feature = []
        for col in data.schema:
            values = rows[:, col.index]
            if col.kind == KIND_CONTINUOUS:
                edges = _quantile_edges(values, spec.bins)
                counts = np.bincount(
                    _bin_codes(values, edges), minlength=edges.size - 1
                ).astype(np.float64)
                probs = (counts + spec.smoothing) / (counts.sum() + spec.smoothing * counts.size)
                per_feature.append({"edges": edges.tolist(), "probs": probs.tolist()})
            else:
                counts = np.bincount(values.astype(np.int64), minlength=col.cardinality)
                probs = (counts + spec.smoothing) / (
                    counts.sum() + spec.smoothing * col.cardinality
                )
                per_feature.append({"probs": probs.tolist()})
        classes[str(c)] = {"features": per_feature}
    return {"classes": classes}


def _sample_hist(gen: FittedGenerator, n: int, rng: np.random.Generator):
    d = len(gen.schema)
    labels = (rng.random(n) < gen.class_prior).astype(np.int64)
    features = np.empty((n, d), dtype=np.float64)
    for c in (0, 1):
        mask = labels == c
        m = int(mask.sum())
        if m == 0:
            continue
        tables = gen.params["classes"][str(c)]["features"]
        for col in gen.schema:
            entry = tables[col.index]
            codes = _draw_iid(np.asarray(entry["probs"]), rng.random(m))
            if col.kind == KIND_CONTINUOUS:
                features[mask, col.index] = _dedisc(np.asarray(entry["edges"]), codes, rng)
            else:
                features[mask, col.index] = codes.astype(np.float64)
    return features, labels


# ---------------------------------------------------------------------------
# public operations

_FITTERS = {"chow_liu_bn": _fit_bn, "gmm": _fit_gmm, "marginal_hist": _fit_hist}
_SAMPLERS = {"chow_liu_bn": _sample_bn, "gmm": _sample_gmm, "marginal_hist": _sample_hist}


def fit_generator(spec: GeneratorSpec, data: Dataset) -> FittedGenerator:
    if data.n_rows < 2:
        raise GeneratorError("fitting needs at least 2 rows")
    params = _FITTERS[spec.kind](spec, data)
    prior = float(np.mean(data.labels == 1))
    return FittedGenerator(spec=spec, schema=data.schema, class_prior=prior, params=params)


def sample(gen: FittedGenerator, n: int, seed: int) -> Dataset:
    """Draw n synthetic rows; deterministic in seed, n=0 keeps the schema."""
    if n < 0:
        raise GeneratorError("sample size must be non-negative")
    if n == 0:
        d = len(gen.schema)
        return Dataset(
            schema=gen.schema,
            features=np.empty((0, d)),
            labels=np.empty(0, dtype=np.int64),
            row_ids=np.empty(0, dtype=np.int64),
        )
    rng = make_rng(seed)
    features, labels = _SAMPLERS[gen.spec.kind](gen, n, rng)
    return Dataset(
        schema=gen.schema, features=features, labels=labels, row_ids=np.arange(n)
    )


def fit_segmented(
    spec: GeneratorSpec, segments: Sequence[tuple[str, Dataset]]
) -> SegmentedGenerator:
    """Fit one generator per nonempty segment; fractions follow segment sizes."""
    total = sum(part.n_rows for _, part in segments)
    if total == 0:
        raise GeneratorError("all segments are empty")
    fitted = []
    for tag, part in segments:
        if part.n_rows == 0:
            log.warning("segment %r is empty and was dropped", tag)
            continue
        seg_spec = replace(spec, seed=derive_seed(spec.seed, "segment", tag))
        fitted.append(Segment(tag, fit_generator(seg_spec, part), part.n_rows / total))
    return SegmentedGenerator(segments=tuple(fitted))


def apportion(n: int, fractions: Sequence[float]) -> list[int]:
    """Largest-remainder allocation of n across fractions, exact total.

    Remainder ties go to the earlier segment.
    """
    if n < 0:
        raise GeneratorError("sample size must be non-negative")
    quotas = [n * f for f in fractions]
    counts = [int(math.floor(q)) for q in quotas]
    short = n - sum(counts)
    order = sorted(range(len(fractions)), key=lambda i: (-(quotas[i] - counts[i]), i))
    pos = 0
    while short > 0:
        counts[order[pos % len(order)]] += 1
        pos += 1
        short -= 1
    return counts


def sample_segmented(gen: SegmentedGenerator, n: int, seed: int) -> Dataset:
    counts = apportion(n, [seg.fraction for seg in gen.segments])
    parts = [
        sample(seg.generator, count, derive_seed(seed, "segment", i, seg.tag))
        for i, (seg, count) in enumerate(zip(gen.segments, counts))
    ]
    features = np.concatenate([p.features for p in parts], axis=0)
    labels = np.concatenate([p.labels for p in parts])
    perm = make_rng(derive_seed(seed, "shuffle")).permutation(n)
    return Dataset(
        schema=gen.segments[0].generator.schema,
        features=features[perm],
        labels=labels[perm],
        row_ids=np.arange(n),
    )


# ---------------------------------------------------------------------------
# serialization


def _spec_to_dict(spec: GeneratorSpec) -> dict:
    return {
        "kind": spec.kind,
        "bins": spec.bins,
        "components": spec.components,
        "smoothing": spec.smoothing,
        "seed": spec.seed,
    }


def _schema_to_list(schema: tuple[ColumnSchema, ...]) -> list[dict]:
    return [
        {"name": c.name, "kind": c.kind, "index": c.index, "cardinality": c.cardinality}
        for c in schema
    ]


def _single_to_dict(gen: FittedGenerator) -> dict:
    return {
        "format": _FORMAT_SINGLE,
        "version": _FORMAT_VERSION,
        "spec": _spec_to_dict(gen.spec),
        "schema": _schema_to_list(gen.schema),
        "class_prior": gen.class_prior,
        "params": gen.params,
    }


def _single_from_dict(doc: dict) -> FittedGenerator:
    spec = GeneratorSpec(**doc["spec"])
    schema = tuple(ColumnSchema(**entry) for entry in doc["schema"])
    return FittedGenerator(
        spec=spec,
        schema=schema,
        class_prior=float(doc["class_prior"]),
        params=doc["params"],
    )


def to_json(gen: FittedGenerator | SegmentedGenerator) -> str:
    """Versioned JSON document for a fitted or segmented generator."""
    if isinstance(gen, SegmentedGenerator):
        doc = {
            "format": _FORMAT_SEGMENTED,
            "version": _FORMAT_VERSION,
            "segments": [
                {
                    "tag": seg.tag,
                    "fraction": seg.fraction,
                    "generator": _single_to_dict(seg.generator),
                }
                for seg in gen.segments
            ],
        }
    else:
        doc = _single_to_dict(gen)
    return json.dumps(doc, sort_keys=True)


def from_json(text: str) -> FittedGenerator | SegmentedGenerator:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise GeneratorError(f"not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or "format" not in doc:
        raise GeneratorError("not a generator document")
    if doc.get("version") != _FORMAT_VERSION:
        raise GeneratorError(f"unsupported generator document version {doc.get('version')!r}")
    if doc["format"] == _FORMAT_SINGLE:
        return _single_from_dict(doc)
    if doc["format"] == _FORMAT_SEGMENTED:
        segments = tuple(
            Segment(
                tag=entry["tag"],
                generator=_single_from_dict(entry["generator"]),
                fraction=float(entry["fraction"]),
            )
            for entry in doc["segments"]
        )
        return SegmentedGenerator(segments=segments)
    raise GeneratorError(f"unknown generator document format {doc['format']!r}")
