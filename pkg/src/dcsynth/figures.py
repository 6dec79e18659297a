"""Matplotlib renderings of the report tables.

Everything here draws from already-aggregated rows (report.AggregateRow,
noisebench.ThresholdRow) so the figures always match the exported CSVs.
The Agg backend is forced; files are written wherever the caller points.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from dcsynth.noisebench import ThresholdRow
from dcsynth.report import AggregateRow, ReportError


def _group_label(row) -> str:
    return " / ".join(str(value) for _, value in row.group) or "all"


def utility_bars(
    rows: Sequence[AggregateRow], metric: str, path, title: str | None = None
) -> Path:
    """Bar chart of one metric per group with 95% CI whiskers."""
    picked = [r for r in rows if r.metric == metric and not r.empty]
    if not picked:
        raise ReportError(f"no rows with values for metric {metric!r}")
    labels = [_group_label(r) for r in picked]
    means = [r.summary.mean for r in picked]
    err_low = [r.summary.mean - r.summary.ci_low for r in picked]
    err_high = [r.summary.ci_high - r.summary.mean for r in picked]
    fig, ax = plt.subplots(figsize=(max(4.0, 1.1 * len(picked) + 1.5), 4.0))
    ax.bar(
        range(len(picked)), means, yerr=[err_low, err_high],
        capsize=4, color="#4878a8", edgecolor="black", linewidth=0.6,
    )
    ax.set_xticks(range(len(picked)))
    ax.set_xticklabels(labels, rotation=20, ha="right", fontsize=8)
    ax.set_ylabel(metric)
    ax.set_title(title or metric)
    ax.grid(axis="y", alpha=0.3)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def noise_curves(
    rows: Sequence[AggregateRow],
    path,
    metric: str = "auroc_synth",
    reference: Sequence[tuple[float, float]] = (),
    title: str | None = None,
) -> Path:
    """Metric vs noise level, one line per remaining group key combination.

    Rows must have been grouped with "noise" among the keys. ``reference``
    is an optional [(noise, value), ...] series drawn as a dashed line
    (real-data roster performance, typically).
    """
    picked = [r for r in rows if r.metric == metric and not r.empty]
    if not picked:
        raise ReportError(f"no rows with values for metric {metric!r}")
    series: dict[tuple, list[tuple[float, AggregateRow]]] = {}
    for row in picked:
        keys = dict(row.group)
        if "noise" not in keys:
            raise ReportError('noise curves need rows grouped by "noise"')
        rest = tuple((k, v) for k, v in row.group if k != "noise")
        series.setdefault(rest, []).append((float(keys["noise"]), row))
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for rest in sorted(series, key=str):
        points = sorted(series[rest], key=lambda t: t[0])
        xs = [x for x, _ in points]
        ys = [r.summary.mean for _, r in points]
        lows = [r.summary.ci_low for _, r in points]
        highs = [r.summary.ci_high for _, r in points]
        label = " / ".join(str(v) for _, v in rest) or metric
        ax.plot(xs, ys, marker="o", label=label)
        ax.fill_between(xs, lows, highs, alpha=0.15)
    if reference:
        ref = sorted(reference)
        ax.plot(
            [x for x, _ in ref], [y for _, y in ref],
            linestyle="--", color="black", label="real data",
        )
    ax.set_xlabel("label noise proportion")
    ax.set_ylabel(metric)
    ax.set_title(title or f"{metric} under label noise")
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def threshold_curves(
    rows: Sequence[ThresholdRow], path, stat: str = "f1", title: str | None = None
) -> Path:
    """Detection stat vs tau for the value-mode rows, one line per method."""
    if stat not in ("f1", "recall", "precision"):
        raise ReportError(f"unknown detection stat {stat!r}")
    picked = [r for r in rows if r.threshold_mode == "value"]
    if not picked:
        raise ReportError("no value-mode rows to plot")
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    methods = sorted({r.method for r in picked})
    for method in methods:
        points = sorted(
            (r for r in picked if r.method == method), key=lambda r: r.tau
        )
        xs = [r.tau for r in points]
        ys = [getattr(r, f"{stat}_mean") for r in points]
        errs = [getattr(r, f"{stat}_std") for r in points]
        ax.errorbar(xs, ys, yerr=errs, marker="o", capsize=3, label=method)
    ax.set_xlabel("tau (value mode)")
    ax.set_ylabel(f"{stat} (mean over cells)")
    ax.set_title(title or f"flip detection {stat} vs threshold")
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
