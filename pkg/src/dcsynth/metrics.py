"""Utility and fidelity metrics.

Ranking metrics (:func:`auroc`, :func:`spearman`) use average ranks for
ties. Distribution metrics compare a real and a synthetic dataset
column-wise (:func:`inverse_kl`, :func:`wasserstein_mean`) or as whole
feature matrices (:func:`mmd_rbf`). :func:`bootstrap_ci` summarises a
vector of per-run values with a percentile confidence interval.

Metric failures raise :class:`MetricError`; callers that aggregate many
runs are expected to record the failure and continue.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from dcsynth.data import KIND_CATEGORICAL, Dataset
from dcsynth.rng import derive_seed, make_rng

EPSILON = 1e-10


class MetricError(ValueError):
    """A metric is undefined for the given inputs."""


@dataclass(frozen=True)
class MetricValue:
    """A named scalar metric, optionally with a per-feature breakdown."""

    name: str
    value: float
    detail: dict[str, float] | None = None


@dataclass(frozen=True)
class BootstrapSummary:
    mean: float
    ci_low: float
    ci_high: float
    n_resamples: int


def _midranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks with ties assigned the average rank of their group."""
    order = np.argsort(values, kind="mergesort")
    sorted_vals = values[order]
    new_group = np.r_[True, sorted_vals[1:] != sorted_vals[:-1]]
    group_id = np.cumsum(new_group) - 1
    counts = np.bincount(group_id)
    ends = np.cumsum(counts)
    mid = (ends - counts + 1 + ends) / 2.0
    ranks = np.empty(values.size, dtype=np.float64)
    ranks[order] = mid[group_id]
    return ranks


def auroc(scores, labels) -> float:
    """Area under the ROC curve with half credit for tied scores.

    Equivalent to the probability that a uniformly drawn positive outranks
    a uniformly drawn negative, counting ties as one half.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.ndim != 1 or scores.shape != labels.shape:
        raise MetricError("scores and labels must be equal-length vectors")
    if not np.isfinite(scores).all():
        raise MetricError("scores must be finite")
    n_pos = int(np.sum(labels == 1))
    n_neg = int(np.sum(labels == 0))
    if n_pos == 0 or n_neg == 0:
        raise MetricError("auroc needs both classes present")
    ranks = _midranks(scores)
    pos_rank_sum = float(ranks[labels == 1].sum())
    return (pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def spearman(a, b) -> float:
    """Spearman rank correlation: average ranks for ties, then Pearson."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise MetricError("inputs must be equal-length vectors")
    if a.size < 2:
        raise MetricError("need at least 2 observations")
    if not (np.isfinite(a).all() and np.isfinite(b).all()):
        raise MetricError("inputs must be finite")
    if np.all(a == a[0]) or np.all(b == b[0]):
        raise MetricError("spearman undefined for a constant vector")
    ra = _midranks(a)
    rb = _midranks(b)
    da = ra - ra.mean()
    db = rb - rb.mean()
    denom = np.sqrt(np.sum(da * da) * np.sum(db * db))
    if denom == 0.0:
        raise MetricError("spearman undefined: zero rank variance")
    return float(np.sum(da * db) / denom)


def _check_pair(real: Dataset, synth: Dataset) -> None:
    if real.schema != synth.schema:
        raise MetricError("real and synthetic datasets have different schemas")
    if real.n_rows == 0 or synth.n_rows == 0:
        raise MetricError("datasets must be non-empty")


def _histogram_pair(
    real_col: np.ndarray, synth_col: np.ndarray, col, bins: int
) -> tuple[np.ndarray, np.ndarray]:
    """Aligned count vectors for one column under the real data's binning."""
    if col.kind == KIND_CATEGORICAL:
        p = np.bincount(real_col.astype(np.int64), minlength=col.cardinality)
        q = np.bincount(synth_col.astype(np.int64), minlength=col.cardinality)
        return p.astype(np.float64), q.astype(np.float64)
    # interior edges at real-data quantiles; out-of-range synth values fall
    # into the end bins
    edges = np.quantile(real_col, np.linspace(0.0, 1.0, bins + 1)[1:-1])
    edges = np.unique(edges)
    p = np.bincount(np.searchsorted(edges, real_col, side="right"), minlength=edges.size + 1)
    q = np.bincount(np.searchsorted(edges, synth_col, side="right"), minlength=edges.size + 1)
    return p.astype(np.float64), q.astype(np.float64)


def inverse_kl(real: Dataset, synth: Dataset, bins: int = 10) -> MetricValue:
    """Mean per-feature inverse KL divergence, 1 / (1 + KL(real || synth)).

    Continuous features are discretised into ``bins`` quantile bins of the
    real column; categorical features compare category frequencies. Both
    histograms are smoothed by ``EPSILON`` and renormalised; KL uses the
    natural log. 1.0 means marginals match exactly.
    """
    _check_pair(real, synth)
    if real.n_rows < bins:
        raise MetricError(f"need at least {bins} real rows for {bins}-bin histograms")
    detail: dict[str, float] = {}
    for col in real.schema:
        p, q = _histogram_pair(real.features[:, col.index], synth.features[:, col.index], col, bins)
        p = p + EPSILON
        q = q + EPSILON
        p /= p.sum()
        q /= q.sum()
        kl = float(np.sum(p * np.log(p / q)))
        detail[col.name] = 1.0 / (1.0 + kl)
    value = float(np.mean(list(detail.values())))
    return MetricValue("inverse_kl", value, detail)


def _w1(real_col: np.ndarray, synth_col: np.ndarray) -> float:
    """1-D Wasserstein-1 between empirical distributions (quantile integral)."""
    grid = np.unique(np.concatenate([real_col, synth_col]))
    if grid.size < 2:
        return 0.0
    cdf_r = np.searchsorted(np.sort(real_col), grid, side="right") / real_col.size
    cdf_s = np.searchsorted(np.sort(synth_col), grid, side="right") / synth_col.size
    return float(np.sum(np.abs(cdf_r[:-1] - cdf_s[:-1]) * np.diff(grid)))


def wasserstein_mean(real: Dataset, synth: Dataset, standardize: bool = True) -> MetricValue:
    """Mean per-feature distribution distance.

    Continuous features use the 1-D Wasserstein-1 distance, by default
    after standardising both sides by the real column's mean and standard
    deviation; categorical features use total variation distance. Lower is
    better; 0 means every marginal matches.
    """
    _check_pair(real, synth)
    detail: dict[str, float] = {}
    for col in real.schema:
        r = real.features[:, col.index]
        s = synth.features[:, col.index]
        if col.kind == KIND_CATEGORICAL:
            p = np.bincount(r.astype(np.int64), minlength=col.cardinality) / r.size
            q = np.bincount(s.astype(np.int64), minlength=col.cardinality) / s.size
            detail[col.name] = float(0.5 * np.abs(p - q).sum())
            continue
        if standardize:
            mu = r.mean()
            sd = r.std()
            if sd == 0.0:
                sd = 1.0
            r = (r - mu) / sd
            s = (s - mu) / sd
        detail[col.name] = _w1(r, s)
    value = float(np.mean(list(detail.values())))
    return MetricValue("wasserstein", value, detail)


def mmd_rbf(real: Dataset, synth: Dataset, max_rows: int = 2000, seed: int = 0) -> MetricValue:
    """Unbiased squared maximum mean discrepancy with an RBF kernel.

    Each side is subsampled to at most ``max_rows`` rows (seeded, without
    replacement). Features are standardised by the pooled mean and standard
    deviation, and the kernel bandwidth is the median pairwise distance of
    the pooled sample (median heuristic). When both sides end up the same
    size the estimator also excludes aligned pairs from the cross term, so
    identical samples score exactly zero; small negative values are
    possible by design.
    """
    _check_pair(real, synth)
    x = _subsample(real.features, max_rows, derive_seed(seed, "mmd", "real"))
    y = _subsample(synth.features, max_rows, derive_seed(seed, "mmd", "synth"))
    m, n = x.shape[0], y.shape[0]
    if m < 2 or n < 2:
        raise MetricError("mmd needs at least 2 rows per side")
    pooled = np.concatenate([x, y], axis=0)
    mu = pooled.mean(axis=0)
    sd = pooled.std(axis=0)
    sd[sd == 0.0] = 1.0
    pooled = (pooled - mu) / sd
    sq = np.sum(pooled**2, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (pooled @ pooled.T)
    np.maximum(d2, 0.0, out=d2)
    tri = np.triu_indices(m + n, k=1)
    median = float(np.median(np.sqrt(d2[tri])))
    if median == 0.0:
        median = 1.0
    k = np.exp(-d2 / (2.0 * median**2))
    k_xx = k[:m, :m]
    k_yy = k[m:, m:]
    k_xy = k[:m, m:]
    sum_xx = float(k_xx.sum() - np.trace(k_xx))
    sum_yy = float(k_yy.sum() - np.trace(k_yy))
    if m == n:
        sum_xy = float(k_xy.sum() - np.trace(k_xy))
        value = (sum_xx + sum_yy - 2.0 * sum_xy) / (m * (m - 1))
    else:
        value = sum_xx / (m * (m - 1)) + sum_yy / (n * (n - 1)) - 2.0 * k_xy.mean()
    return MetricValue("mmd", float(value))


def _subsample(features: np.ndarray, max_rows: int, seed: int) -> np.ndarray:
    if features.shape[0] <= max_rows:
        return features
    rng = make_rng(seed)
    idx = rng.choice(features.shape[0], size=max_rows, replace=False)
    return features[np.sort(idx)]


def bootstrap_ci(values, n_resamples: int = 1000, seed: int = 0) -> BootstrapSummary:
    """Percentile bootstrap (2.5 / 97.5) of the mean of ``values``."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 1 or values.size == 0:
        raise MetricError("need a non-empty vector of values")
    if not np.isfinite(values).all():
        raise MetricError("values must be finite")
    if n_resamples < 1:
        raise MetricError("n_resamples must be positive")
    rng = make_rng(seed)
    idx = rng.integers(0, values.size, size=(n_resamples, values.size))
    means = values[idx].mean(axis=1)
    low, high = np.percentile(means, [2.5, 97.5])
    # the grand mean can drift an ulp outside the percentiles when the
    # resampled means are (nearly) identical; clamp to keep low <= mean <= high
    mean = min(max(float(means.mean()), float(low)), float(high))
    return BootstrapSummary(mean, float(low), float(high), n_resamples)
