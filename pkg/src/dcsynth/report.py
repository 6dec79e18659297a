"""Aggregate run results into tables: bootstrapped means and percent deltas.

Two table shapes come out of here. Aggregate tables give the bootstrapped
mean and 95% CI of each metric per group (generator, strategy pair, noise
level, and so on). Delta tables give the percent change of a strategy pair
against the do-nothing baseline, paired per (dataset, seed, generator)
cell before averaging, so each delta compares a run against its own
baseline twin rather than against a pooled mean. The bootstrap unit for
deltas is the paired cell.

Values inside each group are sorted before resampling, which makes every
table invariant to the input order of the runs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

from dcsynth.metrics import BootstrapSummary, bootstrap_ci
from dcsynth.pipeline import RunResult
from dcsynth.rng import derive_seed

DEFAULT_RESAMPLES = 1000

METRIC_FIELDS = (
    "auroc_real",
    "auroc_synth",
    "model_selection_rho",
    "feature_selection_rho",
    "inverse_kl",
    "mmd",
    "wasserstein",
)

GROUP_KEYS: dict[str, Callable[[RunResult], object]] = {
    "dataset": lambda r: r.config.source.name,
    "noise": lambda r: r.config.noise,
    "profiler": lambda r: r.config.profiler.method,
    "generator": lambda r: r.config.generator.kind,
    "preprocessing": lambda r: r.config.preprocessing,
    "postprocessing": lambda r: r.config.postprocessing,
    "seed": lambda r: r.config.seed,
}

BASELINE_STRATEGY = ("baseline", "baseline")


class ReportError(ValueError):
    """Invalid aggregation request or malformed export input."""


def run_metrics(result: RunResult) -> dict[str, float | None]:
    """Flatten one run into metric values; absent results become None."""
    out: dict[str, float | None] = {name: None for name in METRIC_FIELDS}
    utility = result.utility
    if utility is not None and utility.members:
        out["auroc_real"] = float(
            sum(m.auroc_real for m in utility.members) / len(utility.members)
        )
        out["auroc_synth"] = float(
            sum(m.auroc_synth for m in utility.members) / len(utility.members)
        )
        out["model_selection_rho"] = utility.model_selection_rho
        out["feature_selection_rho"] = utility.feature_selection_rho
    fidelity = result.fidelity
    if fidelity is not None:
        out["inverse_kl"] = fidelity.inverse_kl
        out["mmd"] = fidelity.mmd
        out["wasserstein"] = fidelity.wasserstein
    return out


@dataclass(frozen=True)
class AggregateRow:
    """One (group, metric) cell: bootstrap summary or an empty-group flag.

    ``group`` holds (key name, value) pairs in group_by order; ``missing``
    counts runs whose metric value was absent and therefore excluded.
    """

    group: tuple[tuple[str, object], ...]
    metric: str
    summary: BootstrapSummary | None
    n: int
    missing: int

    @property
    def empty(self) -> bool:
        return self.summary is None


@dataclass(frozen=True)
class DeltaRow:
    """Percent change vs the baseline strategy for one (group, metric).

    ``missing`` counts cells with no matching baseline twin or with either
    value absent. Positive means improvement for AUROC and the rank
    correlations.
    """

    group: tuple[tuple[str, object], ...]
    metric: str
    summary: BootstrapSummary | None
    n: int
    missing: int

    @property
    def empty(self) -> bool:
        return self.summary is None


def _group_value(result: RunResult, key: str):
    try:
        return GROUP_KEYS[key](result)
    except KeyError:
        raise ReportError(
            f"unknown group key {key!r}; valid keys: {', '.join(sorted(GROUP_KEYS))}"
        ) from None


def _grouped(results, group_by):
    groups: dict[tuple, list[RunResult]] = {}
    for result in results:
        key = tuple(_group_value(result, k) for k in group_by)
        groups.setdefault(key, []).append(result)
    return {key: groups[key] for key in sorted(groups, key=lambda g: tuple(map(str, g)))}


def aggregate(
    results: Sequence[RunResult],
    group_by: Sequence[str] = (),
    metrics: Sequence[str] = METRIC_FIELDS,
    n_resamples: int = DEFAULT_RESAMPLES,
    seed: int = 0,
) -> list[AggregateRow]:
    """Bootstrap mean and 95% CI per (group, metric) over the run values."""
    if not results:
        raise ReportError("no results to aggregate")
    for metric in metrics:
        if metric not in METRIC_FIELDS:
            raise ReportError(f"unknown metric {metric!r}")
    rows = []
    for key, members in _grouped(results, group_by).items():
        values_by_metric = [run_metrics(r) for r in members]
        group = tuple(zip(tuple(group_by), key))
        for metric in metrics:
            values = sorted(
                v for vs in values_by_metric if (v := vs[metric]) is not None
            )
            missing = len(members) - len(values)
            if not values:
                rows.append(AggregateRow(group, metric, None, 0, missing))
                continue
            summary = bootstrap_ci(
                values,
                n_resamples,
                seed=derive_seed(seed, "aggregate", metric, *map(str, key)),
            )
            rows.append(AggregateRow(group, metric, summary, len(values), missing))
    return rows


def pct_change_vs_baseline(
    results: Sequence[RunResult],
    metrics: Sequence[str] = METRIC_FIELDS,
    baseline: tuple[str, str] = BASELINE_STRATEGY,
    n_resamples: int = DEFAULT_RESAMPLES,
    seed: int = 0,
) -> list[DeltaRow]:
    """Paired percent change of each strategy pair against the baseline.

    Runs are matched on (dataset identity, seed, generator kind); the
    baseline rows themselves are excluded from the comparison. Cells whose
    baseline is missing, absent, or zero are excluded and counted.
    """
    if not results:
        raise ReportError("no results to compare")
    for metric in metrics:
        if metric not in METRIC_FIELDS:
            raise ReportError(f"unknown metric {metric!r}")

    def pair_key(r: RunResult):
        return (r.dataset_identity, r.config.seed, r.config.generator.kind)

    def strategy(r: RunResult):
        return (r.config.preprocessing, r.config.postprocessing)

    base_values: dict[tuple, dict[str, float | None]] = {}
    for r in results:
        if strategy(r) == baseline and pair_key(r) not in base_values:
            base_values[pair_key(r)] = run_metrics(r)

    by_strategy: dict[tuple, list[RunResult]] = {}
    for r in results:
        if strategy(r) != baseline:
            by_strategy.setdefault(strategy(r), []).append(r)

    rows = []
    for strat in sorted(by_strategy):
        members = by_strategy[strat]
        group = (("preprocessing", strat[0]), ("postprocessing", strat[1]))
        for metric in metrics:
            deltas = []
            missing = 0
            for r in members:
                value = run_metrics(r)[metric]
                base = base_values.get(pair_key(r), {}).get(metric)
                if value is None or base is None or base == 0.0:
                    missing += 1
                    continue
                deltas.append(100.0 * (value - base) / base)
            if not deltas:
                rows.append(DeltaRow(group, metric, None, 0, missing))
                continue
            summary = bootstrap_ci(
                sorted(deltas),
                n_resamples,
                seed=derive_seed(seed, "delta", metric, strat[0], strat[1]),
            )
            rows.append(DeltaRow(group, metric, summary, len(deltas), missing))
    return rows


_FIXED_COLUMNS = ("metric", "mean", "ci_low", "ci_high", "n", "missing")


def _format_float(value: float) -> str:
    return f"{value:.6g}"


def _row_cells(row) -> list[str]:
    if row.summary is None:
        stats = ["", "", ""]
    else:
        stats = [
            _format_float(row.summary.mean),
            _format_float(row.summary.ci_low),
            _format_float(row.summary.ci_high),
        ]
    return (
        [str(v) for _, v in row.group]
        + [row.metric]
        + stats
        + [str(row.n), str(row.missing)]
    )


def export(rows: Sequence[AggregateRow | DeltaRow], format: str, path) -> None:
    """Write rows as CSV or JSON with a stable schema and stable bytes.

    CSV columns are the group keys followed by metric, mean, ci_low,
    ci_high, n, missing; floats carry 6 significant digits. An empty row
    list produces a header-only file.
    """
    if format not in ("csv", "json"):
        raise ReportError(f"unknown export format {format!r}")
    group_names = tuple(name for name, _ in rows[0].group) if rows else ()
    for row in rows:
        if tuple(name for name, _ in row.group) != group_names:
            raise ReportError("rows disagree on group keys")
    path = Path(path)
    if format == "csv":
        lines = [",".join(group_names + _FIXED_COLUMNS)]
        lines.extend(",".join(_row_cells(row)) for row in rows)
        path.write_text("\n".join(lines) + "\n")
        return
    docs = []
    for row in rows:
        doc: dict = {name: value for name, value in row.group}
        doc["metric"] = row.metric
        if row.summary is None:
            doc.update(mean=None, ci_low=None, ci_high=None)
        else:
            doc.update(
                mean=float(_format_float(row.summary.mean)),
                ci_low=float(_format_float(row.summary.ci_low)),
                ci_high=float(_format_float(row.summary.ci_high)),
            )
        doc["n"] = row.n
        doc["missing"] = row.missing
        docs.append(doc)
    path.write_text(json.dumps(docs, indent=2, sort_keys=True) + "\n")
