"""Command-line front end binding config files to the library.

The experiment document is YAML with a version field. Validation happens
before any work starts and unknown keys are rejected; error messages are
anchored to the offending line. The grid is resumable: a cell whose result
file already exists is loaded back instead of recomputed unless --force is
given. Result files are written atomically (temp then rename).

Exit codes: 0 success, 1 runtime failure, 2 config or validation error.
Output directory precedence: DCSYNTH_OUT env var, then --out, then the
config document, then ./results.
"""

from __future__ import annotations

import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import click
import yaml

from dcsynth.data import (
    DataError,
    load_csv,
    simulate_dataset,
    split_stratified,
    write_csv,
)
from dcsynth.figures import noise_curves, threshold_curves, utility_bars
from dcsynth.generators import (
    KINDS as GENERATOR_KINDS,
    GeneratorError,
    GeneratorSpec,
    fit_generator,
    sample,
    to_json as generator_to_json,
)
from dcsynth.learners import IMPORTANCE_KINDS, ClassifierSpec, LearnerError
from dcsynth.metrics import MetricError
from dcsynth.noisebench import (
    BenchmarkError,
    NoiseSweepConfig,
    ThresholdBenchConfig,
    real_reference_rows,
    run_threshold_benchmark,
    sweep_cell_configs,
    threshold_table_csv,
)
from dcsynth.pipeline import (
    DEFAULT_IMPORTANCE_KIND,
    DEFAULT_ROSTER,
    POSTPROCESS_STRATEGIES,
    PREPROCESS_STRATEGIES,
    DataSource,
    PipelineError,
    RunConfig,
    evaluate_fidelity,
    evaluate_utility,
    result_filename,
    result_from_json,
    run_condition,
)
from dcsynth.profiling import (
    METHODS,
    ProfileError,
    ProfilerConfig,
    export_assignment_csv,
    profile_dataset,
)
from dcsynth.report import ReportError, aggregate, export, pct_change_vs_baseline

CONFIG_VERSION = 1

_CONFIG_ERRORS = (
    ProfileError,
    GeneratorError,
    LearnerError,
    PipelineError,
    BenchmarkError,
)
_RUNTIME_ERRORS = (
    DataError,
    ProfileError,
    GeneratorError,
    LearnerError,
    MetricError,
    PipelineError,
    BenchmarkError,
    ReportError,
    OSError,
)

_ROOT_KEYS = {
    "version", "output_dir", "jobs", "seed", "datasets", "profilers",
    "generators", "strategies", "seeds", "noise_levels", "train_fraction",
    "synth_size_ratio", "roster", "importance_kind", "include_real_postprocess",
}
_DATASET_KEYS = {"name", "path", "label_column", "n_features", "n_samples", "rho", "seed"}
_PROFILER_KEYS = {"method", "threshold_mode", "tau", "n_checkpoints", "n_folds", "learner"}
_GENERATOR_KEYS = {"kind", "bins", "components", "smoothing"}


class ConfigError(Exception):
    """Config document problem; message already carries file:line."""


def _fail(message: str, code: int):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _write_atomic(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


# ---------------------------------------------------------------------------
# experiment document parsing


def _collect_lines(node, path, lines):
    if isinstance(node, yaml.MappingNode):
        for key_node, value_node in node.value:
            key_path = path + (key_node.value,)
            lines[key_path] = key_node.start_mark.line + 1
            _collect_lines(value_node, key_path, lines)
    elif isinstance(node, yaml.SequenceNode):
        for i, item in enumerate(node.value):
            item_path = path + (i,)
            lines[item_path] = item.start_mark.line + 1
            _collect_lines(item, item_path, lines)


def _load_document(path: Path) -> tuple[dict, dict]:
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config: {exc}") from exc
    try:
        doc = yaml.safe_load(text)
        node = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f":{mark.line + 1}" if mark else ""
        raise ConfigError(f"{path}{where}: invalid YAML: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}:1: config must be a mapping")
    lines: dict = {}
    if node is not None:
        _collect_lines(node, (), lines)
    return doc, lines


@dataclass(frozen=True)
class Experiment:
    """A validated grid: every cell is a ready-to-run RunConfig."""

    output_dir: str
    jobs: int
    base_seed: int
    sources: tuple[DataSource, ...]
    profilers: tuple[ProfilerConfig, ...]
    generators: tuple[GeneratorSpec, ...]
    strategies: tuple[tuple[str, str], ...]
    seeds: tuple[int, ...]
    noise_levels: tuple[float, ...]
    roster: tuple[ClassifierSpec, ...]
    importance_kind: str
    train_fraction: float
    cells: tuple[RunConfig, ...]


class _DocReader:
    """Walks the parsed document, anchoring every complaint to a line."""

    def __init__(self, path: Path, doc: dict, lines: dict):
        self.path = path
        self.doc = doc
        self.lines = lines

    def anchor(self, *key_path) -> str:
        line = self.lines.get(tuple(key_path), 1)
        return f"{self.path}:{line}"

    def error(self, key_path: tuple, message: str):
        raise ConfigError(f"{self.anchor(*key_path)}: {message}")

    def check_keys(self, mapping: dict, allowed: set, path: tuple, what: str):
        for key in mapping:
            if key not in allowed:
                self.error(
                    path + (key,),
                    f"unknown {what} key {key!r}; allowed: {', '.join(sorted(allowed))}",
                )

    def list_of_maps(self, key: str) -> list[tuple[tuple, dict]]:
        value = self.doc.get(key, [])
        if not isinstance(value, list):
            self.error((key,), f"{key} must be a list")
        out = []
        for i, item in enumerate(value):
            if not isinstance(item, dict):
                self.error((key, i), f"{key} entries must be mappings")
            out.append(((key, i), item))
        return out


def _dataset_from_entry(reader: _DocReader, path: tuple, entry: dict) -> DataSource:
    reader.check_keys(entry, _DATASET_KEYS, path, "dataset")
    try:
        if "path" in entry:
            return DataSource.csv(
                entry["path"],
                name=entry.get("name"),
                label_column=entry.get("label_column", "label"),
            )
        return DataSource.simulation(
            entry.get("n_features"),
            entry.get("n_samples"),
            rho=entry.get("rho"),
            seed=entry.get("seed"),
            name=entry.get("name"),
        )
    except (_CONFIG_ERRORS + (TypeError,)) as exc:
        reader.error(path, f"invalid dataset: {exc}")


def _learner_from_entry(reader: _DocReader, path: tuple, entry) -> ClassifierSpec:
    if isinstance(entry, str):
        entry = {"kind": entry}
    if not isinstance(entry, dict) or "kind" not in entry:
        reader.error(path, "learner must be a kind name or a mapping with a kind")
    params = {k: v for k, v in entry.items() if k != "kind"}
    try:
        return ClassifierSpec.make(entry["kind"], **params)
    except LearnerError as exc:
        reader.error(path, f"invalid learner: {exc}")


def _profiler_from_entry(reader: _DocReader, path: tuple, entry: dict) -> ProfilerConfig:
    reader.check_keys(entry, _PROFILER_KEYS, path, "profiler")
    if "method" not in entry:
        reader.error(path, "profiler needs a method")
    learner = None
    if entry.get("learner") is not None:
        learner = _learner_from_entry(reader, path + ("learner",), entry["learner"])
    kwargs = {
        k: entry[k]
        for k in ("threshold_mode", "tau", "n_checkpoints", "n_folds")
        if k in entry
    }
    try:
        return ProfilerConfig(entry["method"], learner=learner, **kwargs)
    except (ProfileError, LearnerError, TypeError) as exc:
        reader.error(path, f"invalid profiler: {exc}")


def _generator_from_entry(reader: _DocReader, path: tuple, entry: dict) -> GeneratorSpec:
    reader.check_keys(entry, _GENERATOR_KEYS, path, "generator")
    if "kind" not in entry:
        reader.error(path, "generator needs a kind")
    kwargs = {k: entry[k] for k in ("bins", "components", "smoothing") if k in entry}
    try:
        return GeneratorSpec(entry["kind"], **kwargs)
    except (GeneratorError, TypeError) as exc:
        reader.error(path, f"invalid generator: {exc}")


def _require_unique(reader: _DocReader, key: str, names: list):
    dupes = {n for n in names if names.count(n) > 1}
    if dupes:
        reader.error(
            (key,),
            f"duplicate {key} entries {sorted(map(str, dupes))}; "
            "result filenames would collide",
        )


def load_experiment(path: Path, seeds_override=None) -> Experiment:
    doc, lines = _load_document(path)
    reader = _DocReader(path, doc, lines)
    reader.check_keys(doc, _ROOT_KEYS, (), "config")
    version = doc.get("version")
    if version != CONFIG_VERSION:
        reader.error(
            ("version",) if "version" in doc else (),
            f"config version must be {CONFIG_VERSION}, got {version!r}",
        )

    sources = [
        _dataset_from_entry(reader, p, e) for p, e in reader.list_of_maps("datasets")
    ]
    _require_unique(reader, "datasets", [s.name for s in sources])

    profiler_entries = reader.list_of_maps("profilers")
    if profiler_entries:
        profilers = [_profiler_from_entry(reader, p, e) for p, e in profiler_entries]
    else:
        profilers = [ProfilerConfig("cleanlab")]
    _require_unique(reader, "profilers", [p.method for p in profilers])

    generator_entries = reader.list_of_maps("generators")
    if generator_entries:
        generators = [_generator_from_entry(reader, p, e) for p, e in generator_entries]
    else:
        generators = [GeneratorSpec("marginal_hist")]
    _require_unique(reader, "generators", [g.kind for g in generators])

    strategies = doc.get("strategies", [["baseline", "baseline"]])
    if not isinstance(strategies, list):
        reader.error(("strategies",), "strategies must be a list of [pre, post] pairs")
    parsed_strategies = []
    for i, pair in enumerate(strategies):
        if not isinstance(pair, list) or len(pair) != 2:
            reader.error(("strategies", i), "strategy entries are [pre, post] pairs")
        pre, post = pair
        if pre not in PREPROCESS_STRATEGIES or post not in POSTPROCESS_STRATEGIES:
            reader.error(("strategies", i), f"unknown strategy pair ({pre!r}, {post!r})")
        parsed_strategies.append((pre, post))

    seeds = doc.get("seeds", [0])
    if seeds_override is not None:
        seeds = list(seeds_override)
    if not isinstance(seeds, list) or not all(isinstance(s, int) for s in seeds):
        reader.error(("seeds",), "seeds must be a list of integers")

    noise_levels = doc.get("noise_levels", [0.0])
    if not isinstance(noise_levels, list):
        reader.error(("noise_levels",), "noise_levels must be a list")

    roster = DEFAULT_ROSTER
    if doc.get("roster") is not None:
        if not isinstance(doc["roster"], list) or not doc["roster"]:
            reader.error(("roster",), "roster must be a nonempty list")
        roster = tuple(
            _learner_from_entry(reader, ("roster", i), entry)
            for i, entry in enumerate(doc["roster"])
        )

    importance_kind = doc.get("importance_kind", DEFAULT_IMPORTANCE_KIND)
    if importance_kind not in IMPORTANCE_KINDS:
        reader.error(("importance_kind",), f"unknown importance kind {importance_kind!r}")

    jobs = doc.get("jobs", 1)
    if not isinstance(jobs, int) or jobs < 1:
        reader.error(("jobs",), "jobs must be a positive integer")
    base_seed = doc.get("seed", 0)
    if not isinstance(base_seed, int):
        reader.error(("seed",), "seed must be an integer")

    cells = []
    for source in sources:
        for profiler in profilers:
            for generator in generators:
                for pre, post in parsed_strategies:
                    for noise in noise_levels:
                        for seed in seeds:
                            try:
                                cells.append(
                                    RunConfig(
                                        source=source,
                                        profiler=profiler,
                                        generator=generator,
                                        preprocessing=pre,
                                        postprocessing=post,
                                        roster=roster,
                                        importance_kind=importance_kind,
                                        seed=seed,
                                        train_fraction=doc.get("train_fraction", 0.8),
                                        noise=noise,
                                        synth_size_ratio=doc.get("synth_size_ratio", 1.0),
                                        include_real_postprocess=doc.get(
                                            "include_real_postprocess", False
                                        ),
                                    )
                                )
                            except (_CONFIG_ERRORS + (TypeError,)) as exc:
                                reader.error((), f"invalid grid cell: {exc}")

    return Experiment(
        output_dir=doc.get("output_dir", "results"),
        jobs=jobs,
        base_seed=base_seed,
        sources=tuple(sources),
        profilers=tuple(profilers),
        generators=tuple(generators),
        strategies=tuple(parsed_strategies),
        seeds=tuple(seeds),
        noise_levels=tuple(float(n) for n in noise_levels),
        roster=tuple(roster),
        importance_kind=importance_kind,
        train_fraction=doc.get("train_fraction", 0.8),
        cells=tuple(cells),
    )


def parse_seed_list(text: str) -> tuple[int, ...]:
    """Parse "0,1,2" or "1..8" (inclusive) or a mix of both."""
    seeds: list[int] = []
    for part in text.split(","):
        part = part.strip()
        try:
            if ".." in part:
                lo, hi = part.split("..", 1)
                lo, hi = int(lo), int(hi)
                if hi < lo:
                    raise ConfigError(f"empty seed range {part!r}")
                seeds.extend(range(lo, hi + 1))
            else:
                seeds.append(int(part))
        except ValueError:
            raise ConfigError(f"cannot parse seed list entry {part!r}") from None
    return tuple(seeds)


def resolve_out_dir(flag_value, config_value) -> Path:
    env = os.environ.get("DCSYNTH_OUT")
    if env:
        return Path(env)
    if flag_value:
        return Path(flag_value)
    return Path(config_value or "results")


# ---------------------------------------------------------------------------
# grid execution


def _execute_grid(cells, out_dir: Path, jobs: int, force: bool):
    """Run cells whose result file is absent; load the rest back from disk."""
    out_dir.mkdir(parents=True, exist_ok=True)
    results = []
    pending = []
    for config in cells:
        path = out_dir / result_filename(config)
        if path.exists() and not force:
            results.append(result_from_json(path.read_text()))
        else:
            pending.append(config)
    n_reused = len(results)
    if jobs > 1 and len(pending) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            fresh = list(pool.map(run_condition, pending))
    else:
        fresh = [run_condition(config) for config in pending]
    for result in fresh:
        _write_atomic(out_dir / result_filename(result.config), result.to_json())
    results.extend(fresh)
    n_failed = sum(1 for r in results if r.error is not None)
    return results, n_reused, n_failed


def _write_aggregates(results, out_dir: Path, fmt: str = "csv"):
    group_by = ("dataset", "noise", "generator", "preprocessing", "postprocessing")
    rows = aggregate(results, group_by=group_by) if results else []
    export(rows, fmt, out_dir / f"aggregate.{fmt}")
    deltas = pct_change_vs_baseline(results) if results else []
    export(deltas, fmt, out_dir / f"deltas_vs_baseline.{fmt}")


# ---------------------------------------------------------------------------
# commands


@click.group()
@click.version_option(package_name="dcsynth")
def main():
    """Profile-guided synthetic tabular data generation and benchmarking."""


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(), help="Experiment YAML.")
@click.option("--out", default=None, help="Output directory (DCSYNTH_OUT wins).")
@click.option("--seeds", default=None, help="Override config seeds: 0,1,2 or 1..8.")
@click.option("--jobs", default=None, type=int, help="Worker pool size.")
@click.option("--force", is_flag=True, help="Recompute cells whose files exist.")
def run(config_path, out, seeds, jobs, force):
    """Execute the experiment grid: per-run JSON files plus aggregate CSVs."""
    try:
        override = parse_seed_list(seeds) if seeds else None
        experiment = load_experiment(Path(config_path), seeds_override=override)
    except ConfigError as exc:
        _fail(str(exc), 2)
    out_dir = resolve_out_dir(out, experiment.output_dir)
    try:
        results, n_reused, n_failed = _execute_grid(
            experiment.cells, out_dir, jobs or experiment.jobs, force
        )
        _write_aggregates(results, out_dir)
    except _RUNTIME_ERRORS as exc:
        _fail(str(exc), 1)
    executed = len(results) - n_reused
    click.echo(
        f"{len(results)} cells: {executed} executed, {n_reused} reused, "
        f"{n_failed} failed; results in {out_dir}"
    )
    if n_failed:
        _fail(f"{n_failed} runs recorded errors", 1)


@main.command()
@click.argument("csv_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--method", type=click.Choice(METHODS), default="cleanlab")
@click.option(
    "--threshold-mode",
    type=click.Choice(("value", "percentile", "default")),
    default=None,
    help="Defaults to the method's natural mode (cleanlab: default, others: value).",
)
@click.option("--tau", type=float, default=0.2)
@click.option("--label-column", default="label")
@click.option("--seed", type=int, default=0)
@click.option("--out", default=None, help="Assignment CSV path (default <input>_profiles.csv).")
def profile(csv_path, method, threshold_mode, tau, label_column, seed, out):
    """Tag each row of a CSV as Easy, Ambiguous, or Hard."""
    if threshold_mode is None:
        threshold_mode = "default" if method == "cleanlab" else "value"
    try:
        config = ProfilerConfig(method, threshold_mode=threshold_mode, tau=tau, seed=seed)
    except ProfileError as exc:
        _fail(str(exc), 2)
    try:
        data = load_csv(csv_path, label_column)
        result = profile_dataset(data, config)
        out_path = Path(out) if out else Path(csv_path).with_name(
            Path(csv_path).stem + "_profiles.csv"
        )
        out_path.parent.mkdir(parents=True, exist_ok=True)
        export_assignment_csv(result, out_path)
    except _RUNTIME_ERRORS as exc:
        _fail(str(exc), 1)
    counts = result.assignment.counts()
    total = sum(counts.values())
    click.echo(
        f"{total} rows: easy={counts['easy']} ambiguous={counts['ambiguous']} "
        f"hard={counts['hard']} -> {out_path}"
    )


@main.command()
@click.argument("csv_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--kind", type=click.Choice(GENERATOR_KINDS), default="marginal_hist")
@click.option("--bins", type=int, default=8)
@click.option("--components", type=int, default=3)
@click.option("--smoothing", type=float, default=1.0)
@click.option("--n", "n_rows", type=int, default=None, help="Rows to sample (default: input size).")
@click.option("--label-column", default="label")
@click.option("--seed", type=int, default=0)
@click.option("--out", default=None, help="Synthetic CSV path (default <input>_synth.csv).")
@click.option("--model-out", default=None, help="Also save the fitted generator as JSON.")
def generate(csv_path, kind, bins, components, smoothing, n_rows, label_column, seed, out, model_out):
    """Fit a generator to a CSV and sample a synthetic copy."""
    try:
        spec = GeneratorSpec(
            kind, bins=bins, components=components, smoothing=smoothing, seed=seed
        )
    except GeneratorError as exc:
        _fail(str(exc), 2)
    try:
        data = load_csv(csv_path, label_column)
        generator = fit_generator(spec, data)
        count = n_rows if n_rows is not None else data.n_rows
        synth = sample(generator, count, seed)
        out_path = Path(out) if out else Path(csv_path).with_name(
            Path(csv_path).stem + "_synth.csv"
        )
        out_path.parent.mkdir(parents=True, exist_ok=True)
        write_csv(synth, out_path, label_column=label_column)
        if model_out:
            _write_atomic(Path(model_out), generator_to_json(generator))
    except _RUNTIME_ERRORS as exc:
        _fail(str(exc), 1)
    click.echo(f"sampled {synth.n_rows} rows with {kind} -> {out_path}")


@main.command()
@click.argument("real_csv", type=click.Path(exists=True, dir_okay=False))
@click.argument("synth_csv", type=click.Path(exists=True, dir_okay=False))
@click.option("--label-column", default="label")
@click.option("--train-fraction", type=float, default=0.8)
@click.option("--seed", type=int, default=0)
@click.option("--importance-kind", type=click.Choice(sorted(IMPORTANCE_KINDS)), default=DEFAULT_IMPORTANCE_KIND)
@click.option("--out", default=None, help="Write the JSON here instead of stdout.")
def evaluate(real_csv, synth_csv, label_column, train_fraction, seed, importance_kind, out):
    """TSTR utility and fidelity of a synthetic CSV against a real one."""
    try:
        real = load_csv(real_csv, label_column)
        synth = load_csv(synth_csv, label_column)
        split = split_stratified(real, train_fraction, seed)
        utility = evaluate_utility(
            split.train, synth, split.test, DEFAULT_ROSTER, seed,
            importance_kind=importance_kind,
        )
        fidelity = evaluate_fidelity(split.train, synth)
    except _RUNTIME_ERRORS as exc:
        _fail(str(exc), 1)
    doc = json.dumps(
        {"utility": utility.to_dict(), "fidelity": fidelity.to_dict()},
        indent=2, sort_keys=True,
    )
    if out:
        _write_atomic(Path(out), doc + "\n")
        click.echo(f"wrote {out}")
    else:
        click.echo(doc)


@main.command()
@click.option("--n-features", type=int, required=True)
@click.option("--n-samples", type=int, required=True)
@click.option("--rho", type=float, default=None, help="Fixed feature-label correlation.")
@click.option("--seed", type=int, default=0)
@click.option("--label-column", default="label")
@click.option("--out", required=True, type=click.Path())
def simulate(n_features, n_samples, rho, seed, label_column, out):
    """Write a simulated binary-labeled dataset to CSV."""
    try:
        data = simulate_dataset(n_features, n_samples, rho=rho, seed=seed)
    except DataError as exc:
        _fail(str(exc), 2)
    try:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        write_csv(data, out, label_column=label_column)
    except OSError as exc:
        _fail(str(exc), 1)
    click.echo(f"wrote {data.n_rows} rows x {len(data.schema)} columns -> {out}")


_BENCH_KEYS = {
    "version", "output_dir", "jobs", "shapes", "noise_levels", "methods",
    "value_taus", "percentile_taus", "include_cleanlab_default", "seeds",
    "n_checkpoints", "n_folds",
}


def _load_bench_config(path: Path, seeds_override=None):
    doc, lines = _load_document(path)
    reader = _DocReader(path, doc, lines)
    reader.check_keys(doc, _BENCH_KEYS, (), "config")
    if doc.get("version") != CONFIG_VERSION:
        reader.error(
            ("version",) if "version" in doc else (),
            f"config version must be {CONFIG_VERSION}, got {doc.get('version')!r}",
        )
    kwargs = {}
    for key in (
        "noise_levels", "methods", "value_taus", "percentile_taus",
        "include_cleanlab_default", "seeds", "n_checkpoints", "n_folds",
    ):
        if key in doc:
            value = doc[key]
            kwargs[key] = tuple(value) if isinstance(value, list) else value
    if "shapes" in doc:
        try:
            kwargs["shapes"] = tuple((int(d), int(n)) for d, n in doc["shapes"])
        except (TypeError, ValueError):
            reader.error(("shapes",), "shapes must be [n_features, n_samples] pairs")
    if seeds_override is not None:
        kwargs["seeds"] = seeds_override
    try:
        config = ThresholdBenchConfig(**kwargs)
    except (BenchmarkError, TypeError) as exc:
        reader.error((), f"invalid benchmark config: {exc}")
    return config, doc.get("output_dir"), doc.get("jobs", 1)


@main.command("threshold-bench")
@click.option("--config", "config_path", default=None, type=click.Path(), help="Optional YAML grid.")
@click.option("--out", default=None)
@click.option("--seeds", default=None, help="Override seeds: 0,1,2 or 1..8.")
@click.option("--jobs", default=None, type=int)
@click.option("--force", is_flag=True)
def threshold_bench(config_path, out, seeds, jobs, force):
    """Flip-detection study over the threshold grid; cells JSON + summary CSV."""
    try:
        override = parse_seed_list(seeds) if seeds else None
        if config_path:
            config, doc_out, doc_jobs = _load_bench_config(Path(config_path), override)
        else:
            config = (
                ThresholdBenchConfig(seeds=override)
                if override
                else ThresholdBenchConfig()
            )
            doc_out, doc_jobs = None, 1
    except ConfigError as exc:
        _fail(str(exc), 2)
    out_dir = resolve_out_dir(out, doc_out)
    cells_path = out_dir / "threshold_cells.json"
    summary_path = out_dir / "threshold_summary.csv"
    if cells_path.exists() and summary_path.exists() and not force:
        click.echo(f"reusing existing benchmark in {out_dir} (use --force to rerun)")
        return
    try:
        result = run_threshold_benchmark(config, jobs=jobs or doc_jobs)
        _write_atomic(
            cells_path,
            json.dumps([c.to_dict() for c in result.cells], indent=2, sort_keys=True) + "\n",
        )
        _write_atomic(summary_path, threshold_table_csv(result.rows))
        if any(r.threshold_mode == "value" for r in result.rows):
            threshold_curves(result.rows, out_dir / "threshold_f1.png", stat="f1")
            threshold_curves(result.rows, out_dir / "threshold_recall.png", stat="recall")
    except _RUNTIME_ERRORS as exc:
        _fail(str(exc), 1)
    n_failed = sum(1 for c in result.cells if c.error is not None)
    click.echo(
        f"{len(result.cells)} cells ({n_failed} degenerate), "
        f"{len(result.rows)} summary rows -> {out_dir}"
    )


@main.command("noise-sweep")
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--out", default=None)
@click.option("--seeds", default=None, help="Override config seeds: 0,1,2 or 1..8.")
@click.option("--jobs", default=None, type=int)
@click.option("--force", is_flag=True)
def noise_sweep(config_path, out, seeds, jobs, force):
    """Pipeline sweep over noise levels with a real-data reference per level."""
    try:
        override = parse_seed_list(seeds) if seeds else None
        experiment = load_experiment(Path(config_path), seeds_override=override)
        if not experiment.sources:
            raise ConfigError(f"{config_path}: noise sweep needs at least one dataset")
        sweeps = []
        for source in experiment.sources:
            for profiler in experiment.profilers:
                base = RunConfig(
                    source=source,
                    profiler=profiler,
                    generator=experiment.generators[0],
                    roster=experiment.roster,
                    importance_kind=experiment.importance_kind,
                    seed=experiment.base_seed,
                    train_fraction=experiment.train_fraction,
                )
                sweeps.append(
                    NoiseSweepConfig(
                        base=base,
                        noise_levels=experiment.noise_levels,
                        generators=experiment.generators,
                        strategies=experiment.strategies,
                        seeds=experiment.seeds,
                    )
                )
    except ConfigError as exc:
        _fail(str(exc), 2)
    except (BenchmarkError, PipelineError) as exc:
        _fail(f"{config_path}: {exc}", 2)
    out_dir = resolve_out_dir(out, experiment.output_dir)
    worker_count = jobs or experiment.jobs
    try:
        all_results = []
        for sweep in sweeps:
            cells = sweep_cell_configs(sweep)
            results, n_reused, n_failed = _execute_grid(cells, out_dir, worker_count, force)
            all_results.extend(results)
            refs = real_reference_rows(sweep, jobs=worker_count)
            ref_name = f"real_reference_{sweep.base.source.name}_{sweep.base.profiler.method}.csv"
            kinds = [spec.kind for spec in sweep.base.roster]
            lines = ["noise,seed,mean_auroc," + ",".join(kinds) + ",error"]
            for ref in refs:
                by_kind = dict(ref.member_aurocs)
                mean = "" if ref.mean_auroc is None else f"{ref.mean_auroc:.6g}"
                member_cells = ",".join(
                    f"{by_kind[k]:.6g}" if k in by_kind else "" for k in kinds
                )
                lines.append(
                    f"{ref.noise:.6g},{ref.seed},{mean},{member_cells},{ref.error or ''}"
                )
            _write_atomic(out_dir / ref_name, "\n".join(lines) + "\n")
        _write_aggregates(all_results, out_dir)
        noise_rows = aggregate(
            all_results, group_by=("noise", "preprocessing", "postprocessing")
        ) if all_results else []
        if any(not r.empty and r.metric == "auroc_synth" for r in noise_rows):
            noise_curves(noise_rows, out_dir / "noise_curves.png")
    except _RUNTIME_ERRORS as exc:
        _fail(str(exc), 1)
    n_failed_total = sum(1 for r in all_results if r.error is not None)
    click.echo(
        f"{len(all_results)} runs across {len(sweeps)} sweeps, "
        f"{n_failed_total} failed -> {out_dir}"
    )
    if n_failed_total:
        _fail(f"{n_failed_total} runs recorded errors", 1)


@main.command()
@click.option("--results", "results_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--out", default=None, help="Defaults to the results directory.")
@click.option("--format", "fmt", type=click.Choice(("csv", "json")), default="csv")
@click.option("--metric", default="auroc_synth", help="Metric drawn in the figures.")
def report(results_dir, out, fmt, metric):
    """Aggregate stored run results into tables and figures."""
    results_dir = Path(results_dir)
    out_dir = resolve_out_dir(out, str(results_dir))
    results = []
    skipped = 0
    for path in sorted(results_dir.glob("*.json")):
        try:
            results.append(result_from_json(path.read_text()))
        except PipelineError:
            skipped += 1
    if not results:
        _fail(f"no run results found in {results_dir}", 1)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        strategy_rows = aggregate(
            results, group_by=("generator", "preprocessing", "postprocessing")
        )
        export(strategy_rows, fmt, out_dir / f"aggregate_by_strategy.{fmt}")
        noise_rows = aggregate(results, group_by=("noise", "preprocessing", "postprocessing"))
        export(noise_rows, fmt, out_dir / f"aggregate_by_noise.{fmt}")
        deltas = pct_change_vs_baseline(results)
        export(deltas, fmt, out_dir / f"deltas_vs_baseline.{fmt}")
        figures = []
        if any(r.metric == metric and not r.empty for r in strategy_rows):
            figures.append(
                utility_bars(strategy_rows, metric, out_dir / f"{metric}_by_strategy.png")
            )
        noise_values = {
            dict(r.group).get("noise") for r in noise_rows if not r.empty
        }
        if len(noise_values) > 1 and any(
            r.metric == metric and not r.empty for r in noise_rows
        ):
            figures.append(noise_curves(noise_rows, out_dir / "noise_curves.png", metric=metric))
    except _RUNTIME_ERRORS as exc:
        _fail(str(exc), 1)
    click.echo(
        f"aggregated {len(results)} runs ({skipped} non-run files skipped), "
        f"{len(figures)} figures -> {out_dir}"
    )


if __name__ == "__main__":
    main()
