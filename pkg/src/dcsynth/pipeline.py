"""One experimental condition end to end.

``run_condition`` executes the full flow for a single configuration:
split, optional label-noise injection, profiling of the training split,
profile-based segmentation, segmented generator fitting and sampling,
optional hard-sample filtering of the synthetic data, then utility and
fidelity evaluation. The result is a pure function of the config: every
stage seed is derived from ``config.seed``, and the canonical JSON
serialization excludes wall-clock time so repeated runs are byte-identical.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from dcsynth.data import (
    DataError,
    Dataset,
    inject_label_noise,
    load_csv,
    round_half_away,
    simulate_dataset,
    split_stratified,
)
from dcsynth.generators import (
    GeneratorError,
    GeneratorSpec,
    fit_segmented,
    sample_segmented,
)
from dcsynth.learners import (
    IMPORTANCE_KINDS,
    ROSTER_KINDS,
    ClassifierSpec,
    LearnerError,
    feature_importance,
    train,
)
from dcsynth.metrics import MetricError, auroc, inverse_kl, mmd_rbf, spearman, wasserstein_mean
from dcsynth.profiling import (
    AMBIGUOUS,
    EASY,
    HARD,
    ProfileAssignment,
    ProfileError,
    ProfilerConfig,
    profile_dataset,
)
from dcsynth.rng import derive_seed

log = logging.getLogger(__name__)

PREPROCESS_STRATEGIES = ("baseline", "easy_hard", "easy_ambiguous_hard")
POSTPROCESS_STRATEGIES = ("baseline", "no_hard")

DEFAULT_ROSTER = tuple(ClassifierSpec(kind) for kind in ROSTER_KINDS)
DEFAULT_IMPORTANCE_KIND = "random_forest"


class PipelineError(ValueError):
    """Invalid run configuration or an unrecoverable stage failure."""


@dataclass(frozen=True)
class DataSource:
    """Where a run's dataset comes from: a CSV file or a simulation recipe.

    A simulation without an explicit seed draws it from the run seed, so
    every run seed sees a fresh dataset; pinning ``seed`` fixes the data
    across run seeds instead.
    """

    name: str
    path: str | None = None
    label_column: str = "label"
    n_features: int | None = None
    n_samples: int | None = None
    rho: float | None = None
    seed: int | None = None

    def __post_init__(self):
        if not self.name:
            raise PipelineError("data source needs a name")
        if self.path is None:
            if self.n_features is None or self.n_samples is None:
                raise PipelineError("data source needs a path or simulation sizes")
        elif self.n_features is not None or self.n_samples is not None:
            raise PipelineError("data source cannot be both a path and a simulation")

    @classmethod
    def csv(
        cls, path: str | Path, name: str | None = None, label_column: str = "label"
    ) -> "DataSource":
        path = Path(path)
        return cls(name=name or path.stem, path=str(path), label_column=label_column)

    @classmethod
    def simulation(
        cls,
        n_features: int,
        n_samples: int,
        rho: float | None = None,
        seed: int | None = None,
        name: str | None = None,
    ) -> "DataSource":
        return cls(
            name=name or f"sim-d{n_features}-n{n_samples}",
            n_features=n_features,
            n_samples=n_samples,
            rho=rho,
            seed=seed,
        )

    def load(self, fallback_seed: int) -> Dataset:
        if self.path is not None:
            return load_csv(self.path, self.label_column)
        seed = self.seed if self.seed is not None else fallback_seed
        return simulate_dataset(self.n_features, self.n_samples, seed=seed, rho=self.rho)

    def identity(self, noise: float = 0.0) -> str:
        """Dataset label used in filenames; noisy variants get a suffix."""
        if noise > 0:
            return f"{self.name}-n{round_half_away(noise * 100)}"
        return self.name


@dataclass(frozen=True)
class RunConfig:
    source: DataSource
    profiler: ProfilerConfig
    generator: GeneratorSpec
    preprocessing: str = "baseline"
    postprocessing: str = "baseline"
    roster: tuple[ClassifierSpec, ...] = DEFAULT_ROSTER
    importance_kind: str = DEFAULT_IMPORTANCE_KIND
    seed: int = 0
    train_fraction: float = 0.8
    noise: float = 0.0
    synth_size_ratio: float = 1.0
    include_real_postprocess: bool = False

    def __post_init__(self):
        object.__setattr__(self, "roster", tuple(self.roster))
        if self.preprocessing not in PREPROCESS_STRATEGIES:
            raise PipelineError(
                f"preprocessing must be one of {', '.join(PREPROCESS_STRATEGIES)}"
            )
        if self.postprocessing not in POSTPROCESS_STRATEGIES:
            raise PipelineError(
                f"postprocessing must be one of {', '.join(POSTPROCESS_STRATEGIES)}"
            )
        if self.preprocessing == "easy_ambiguous_hard" and self.profiler.method == "cleanlab":
            raise PipelineError(
                "easy_ambiguous_hard needs a profiler that identifies ambiguous samples"
            )
        if not 0.0 < self.train_fraction < 1.0:
            raise PipelineError("train_fraction must be in (0, 1)")
        if not 0.0 <= self.noise <= 0.5:
            raise PipelineError("noise proportion must be in [0, 0.5]")
        if not self.synth_size_ratio > 0:
            raise PipelineError("synth_size_ratio must be positive")
        if not self.roster:
            raise PipelineError("roster must not be empty")
        if self.importance_kind not in IMPORTANCE_KINDS:
            raise PipelineError(
                f"importance_kind must be one of {', '.join(IMPORTANCE_KINDS)}"
            )


@dataclass(frozen=True)
class RosterScore:
    kind: str
    auroc_real: float
    auroc_synth: float


@dataclass(frozen=True)
class UtilityResult:
    """Train-on-synthetic-test-on-real utility next to the real baseline."""

    members: tuple[RosterScore, ...]
    model_selection_rho: float | None
    feature_selection_rho: float | None
    importance_kind: str
    missing: tuple[tuple[str, str], ...] = ()

    def to_dict(self) -> dict:
        return {
            "members": [
                {"kind": m.kind, "auroc_real": m.auroc_real, "auroc_synth": m.auroc_synth}
                for m in self.members
            ],
            "model_selection_rho": self.model_selection_rho,
            "feature_selection_rho": self.feature_selection_rho,
            "importance_kind": self.importance_kind,
            "missing": {name: reason for name, reason in self.missing},
        }


@dataclass(frozen=True)
class FidelityResult:
    inverse_kl: float | None
    mmd: float | None
    wasserstein: float | None
    missing: tuple[tuple[str, str], ...] = ()

    def to_dict(self) -> dict:
        return {
            "inverse_kl": self.inverse_kl,
            "mmd": self.mmd,
            "wasserstein": self.wasserstein,
            "missing": {name: reason for name, reason in self.missing},
        }


@dataclass(frozen=True)
class RunResult:
    """Everything one condition produced, including partial failures.

    ``wall_clock_seconds`` is informational only and excluded from the
    canonical serialization, which must be deterministic in the config.
    """

    config: RunConfig
    dataset_identity: str
    n_train: int | None = None
    n_test: int | None = None
    n_synth: int | None = None
    n_synth_post: int | None = None
    flipped_count: int = 0
    train_profile_counts: dict | None = None
    synth_profile_counts: dict | None = None
    segment_fractions: dict | None = None
    utility: UtilityResult | None = None
    fidelity: FidelityResult | None = None
    real_postprocess_utility: UtilityResult | None = None
    scorer_refit_on_synthetic: bool = True
    warnings: tuple[str, ...] = ()
    test_access: tuple[str, ...] = ()
    error: tuple[str, str] | None = None
    wall_clock_seconds: float = 0.0

    def to_dict(self) -> dict:
        return {
            "config": config_to_dict(self.config),
            "dataset": self.dataset_identity,
            "sizes": {
                "train": self.n_train,
                "test": self.n_test,
                "synth": self.n_synth,
                "synth_post": self.n_synth_post,
            },
            "flipped": self.flipped_count,
            "train_profile_counts": self.train_profile_counts,
            "synth_profile_counts": self.synth_profile_counts,
            "segment_fractions": self.segment_fractions,
            "utility": self.utility.to_dict() if self.utility else None,
            "fidelity": self.fidelity.to_dict() if self.fidelity else None,
            "real_postprocess_utility": (
                self.real_postprocess_utility.to_dict()
                if self.real_postprocess_utility
                else None
            ),
            "scorer_refit_on_synthetic": self.scorer_refit_on_synthetic,
            "warnings": list(self.warnings),
            "test_access": list(self.test_access),
            "error": (
                {"stage": self.error[0], "message": self.error[1]} if self.error else None
            ),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _classifier_to_dict(spec: ClassifierSpec) -> dict:
    return {"kind": spec.kind, "seed": spec.seed, "params": dict(spec.params)}


def _profiler_to_dict(cfg: ProfilerConfig) -> dict:
    return {
        "method": cfg.method,
        "threshold_mode": cfg.threshold_mode,
        "tau": cfg.tau,
        "learner": _classifier_to_dict(cfg.learner) if cfg.learner else None,
        "n_checkpoints": cfg.n_checkpoints,
        "n_folds": cfg.n_folds,
        "seed": cfg.seed,
    }


def _generator_to_dict(spec: GeneratorSpec) -> dict:
    return {
        "kind": spec.kind,
        "bins": spec.bins,
        "components": spec.components,
        "smoothing": spec.smoothing,
        "seed": spec.seed,
    }


def _source_to_dict(source: DataSource) -> dict:
    return {
        "name": source.name,
        "path": source.path,
        "label_column": source.label_column,
        "n_features": source.n_features,
        "n_samples": source.n_samples,
        "rho": source.rho,
        "seed": source.seed,
    }


def config_to_dict(config: RunConfig) -> dict:
    return {
        "source": _source_to_dict(config.source),
        "profiler": _profiler_to_dict(config.profiler),
        "generator": _generator_to_dict(config.generator),
        "preprocessing": config.preprocessing,
        "postprocessing": config.postprocessing,
        "roster": [_classifier_to_dict(s) for s in config.roster],
        "importance_kind": config.importance_kind,
        "seed": config.seed,
        "train_fraction": config.train_fraction,
        "noise": config.noise,
        "synth_size_ratio": config.synth_size_ratio,
        "include_real_postprocess": config.include_real_postprocess,
    }


def _classifier_from_dict(d: dict) -> ClassifierSpec:
    return ClassifierSpec(
        d["kind"], seed=d["seed"], params=tuple(sorted(d["params"].items()))
    )


def _profiler_from_dict(d: dict) -> ProfilerConfig:
    return ProfilerConfig(
        d["method"],
        threshold_mode=d["threshold_mode"],
        tau=d["tau"],
        learner=_classifier_from_dict(d["learner"]) if d["learner"] else None,
        n_checkpoints=d["n_checkpoints"],
        n_folds=d["n_folds"],
        seed=d["seed"],
    )


def _generator_from_dict(d: dict) -> GeneratorSpec:
    return GeneratorSpec(
        d["kind"],
        bins=d["bins"],
        components=d["components"],
        smoothing=d["smoothing"],
        seed=d["seed"],
    )


def _source_from_dict(d: dict) -> DataSource:
    return DataSource(
        name=d["name"],
        path=d["path"],
        label_column=d["label_column"],
        n_features=d["n_features"],
        n_samples=d["n_samples"],
        rho=d["rho"],
        seed=d["seed"],
    )


def config_from_dict(d: dict) -> RunConfig:
    """Inverse of config_to_dict; revalidates everything on the way in."""
    try:
        return RunConfig(
            source=_source_from_dict(d["source"]),
            profiler=_profiler_from_dict(d["profiler"]),
            generator=_generator_from_dict(d["generator"]),
            preprocessing=d["preprocessing"],
            postprocessing=d["postprocessing"],
            roster=tuple(_classifier_from_dict(s) for s in d["roster"]),
            importance_kind=d["importance_kind"],
            seed=d["seed"],
            train_fraction=d["train_fraction"],
            noise=d["noise"],
            synth_size_ratio=d["synth_size_ratio"],
            include_real_postprocess=d["include_real_postprocess"],
        )
    except (KeyError, TypeError, AttributeError) as exc:
        raise PipelineError(f"not a run config document: {exc}") from exc


def _utility_from_dict(d: dict | None) -> UtilityResult | None:
    if d is None:
        return None
    return UtilityResult(
        members=tuple(
            RosterScore(m["kind"], m["auroc_real"], m["auroc_synth"])
            for m in d["members"]
        ),
        model_selection_rho=d["model_selection_rho"],
        feature_selection_rho=d["feature_selection_rho"],
        importance_kind=d["importance_kind"],
        missing=tuple(sorted(d["missing"].items())),
    )


def _fidelity_from_dict(d: dict | None) -> FidelityResult | None:
    if d is None:
        return None
    return FidelityResult(
        d["inverse_kl"],
        d["mmd"],
        d["wasserstein"],
        missing=tuple(sorted(d["missing"].items())),
    )


def result_from_dict(d: dict) -> RunResult:
    """Inverse of RunResult.to_dict (wall clock is not serialized)."""
    try:
        sizes = d["sizes"]
        error = d["error"]
        return RunResult(
            config=config_from_dict(d["config"]),
            dataset_identity=d["dataset"],
            n_train=sizes["train"],
            n_test=sizes["test"],
            n_synth=sizes["synth"],
            n_synth_post=sizes["synth_post"],
            flipped_count=d["flipped"],
            train_profile_counts=d["train_profile_counts"],
            synth_profile_counts=d["synth_profile_counts"],
            segment_fractions=d["segment_fractions"],
            utility=_utility_from_dict(d["utility"]),
            fidelity=_fidelity_from_dict(d["fidelity"]),
            real_postprocess_utility=_utility_from_dict(d["real_postprocess_utility"]),
            scorer_refit_on_synthetic=d["scorer_refit_on_synthetic"],
            warnings=tuple(d["warnings"]),
            test_access=tuple(d["test_access"]),
            error=(error["stage"], error["message"]) if error else None,
        )
    except (KeyError, TypeError, AttributeError) as exc:
        raise PipelineError(f"not a run result document: {exc}") from exc


def result_from_json(text: str) -> RunResult:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise PipelineError(f"not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise PipelineError("not a run result document")
    return result_from_dict(doc)


def result_filename(config: RunConfig) -> str:
    return "_".join(
        [
            config.source.identity(config.noise),
            config.profiler.method,
            config.generator.kind,
            config.preprocessing,
            config.postprocessing,
            str(config.seed),
        ]
    ) + ".json"


# ---------------------------------------------------------------------------
# stages


def preprocess(
    train_set: Dataset, assignment: ProfileAssignment, strategy: str
) -> list[tuple[str, Dataset]]:
    """Partition the training data into profile segments.

    ``easy_hard`` groups everything that is not Hard into the easy-side
    segment, so Ambiguous rows (three-way profilers) land with Easy.
    Empty segments are dropped with a warning.
    """
    if strategy not in PREPROCESS_STRATEGIES:
        raise PipelineError(f"unknown preprocessing strategy {strategy!r}")
    if assignment.row_ids.shape[0] != train_set.n_rows or set(
        assignment.row_ids.tolist()
    ) != set(train_set.row_ids.tolist()):
        raise PipelineError("profile assignment does not cover the training rows")
    if strategy == "baseline":
        return [("all", train_set)]
    tag_of = dict(zip(assignment.row_ids.tolist(), assignment.tags.tolist()))
    tags = np.array([tag_of[rid] for rid in train_set.row_ids.tolist()])
    if strategy == "easy_hard":
        wanted = [("easy", tags != HARD), ("hard", tags == HARD)]
    else:
        if assignment.method == "cleanlab":
            raise PipelineError(
                "easy_ambiguous_hard needs a profiler that identifies ambiguous samples"
            )
        wanted = [(tag, tags == tag) for tag in (EASY, AMBIGUOUS, HARD)]
    segments = []
    for tag, mask in wanted:
        if not mask.any():
            log.warning("preprocess segment %r is empty and was dropped", tag)
            continue
        segments.append((tag, train_set.subset(np.flatnonzero(mask))))
    return segments


def postprocess(
    synth: Dataset, profiler: ProfilerConfig, strategy: str, seed: int
) -> tuple[Dataset, ProfileAssignment | None]:
    """Filter the synthetic sample; baseline is the identity.

    ``no_hard`` refits the profiling scorer on the synthetic data itself
    (no real data involved) and drops rows tagged Hard.
    """
    if strategy not in POSTPROCESS_STRATEGIES:
        raise PipelineError(f"unknown postprocessing strategy {strategy!r}")
    if strategy == "baseline":
        return synth, None
    if synth.n_rows == 0:
        raise PipelineError("no synthetic rows to filter")
    scorer = replace(profiler, seed=derive_seed(seed, "postprocess"))
    result = profile_dataset(synth, scorer)
    hard = result.assignment.tags == HARD
    if hard.all():
        raise PipelineError("every synthetic row was tagged hard")
    return synth.subset(np.flatnonzero(~hard)), result.assignment


def evaluate_utility(
    real_train: Dataset,
    synth_post: Dataset,
    test: Dataset,
    roster: Sequence[ClassifierSpec],
    seed: int,
    importance_kind: str = DEFAULT_IMPORTANCE_KIND,
) -> UtilityResult:
    """Train the roster twice (real, synthetic) and compare on the test set.

    Each roster member is re-seeded by kind so its real-trained and
    synth-trained copies share identical training randomness. Metric
    failures are recorded as missing fields, never raised.
    """
    if not roster:
        raise PipelineError("roster must not be empty")
    if synth_post.n_rows == 0:
        raise PipelineError("empty synthetic data")
    if set(test.row_ids.tolist()) & set(real_train.row_ids.tolist()):
        raise PipelineError("test rows overlap the training rows")
    members = []
    missing: list[tuple[str, str]] = []
    for spec in roster:
        seeded = replace(spec, seed=derive_seed(seed, spec.kind))
        on_real = train(seeded, real_train)
        on_synth = train(seeded, synth_post)
        members.append(
            RosterScore(
                kind=spec.kind,
                auroc_real=auroc(on_real.predict_proba(test.features), test.labels),
                auroc_synth=auroc(on_synth.predict_proba(test.features), test.labels),
            )
        )
    model_rho = None
    if len(members) < 2:
        missing.append(("model_selection_rho", "needs at least 2 roster members"))
    else:
        try:
            model_rho = spearman(
                [m.auroc_real for m in members], [m.auroc_synth for m in members]
            )
        except MetricError as exc:
            missing.append(("model_selection_rho", str(exc)))
    feature_rho = None
    try:
        imp_spec = ClassifierSpec(importance_kind, seed=derive_seed(seed, "importance"))
        imp_real = feature_importance(train(imp_spec, real_train))
        imp_synth = feature_importance(train(imp_spec, synth_post))
        feature_rho = spearman(imp_real, imp_synth)
    except (MetricError, LearnerError) as exc:
        missing.append(("feature_selection_rho", str(exc)))
    return UtilityResult(
        members=tuple(members),
        model_selection_rho=model_rho,
        feature_selection_rho=feature_rho,
        importance_kind=importance_kind,
        missing=tuple(missing),
    )


def evaluate_fidelity(real_train: Dataset, synth_post: Dataset) -> FidelityResult:
    """Distribution similarity of synthetic to real training features."""
    if real_train.schema != synth_post.schema:
        raise PipelineError("real and synthetic schemas differ")
    values: dict[str, float | None] = {}
    missing: list[tuple[str, str]] = []
    for name, compute in (
        ("inverse_kl", lambda: inverse_kl(real_train, synth_post).value),
        ("mmd", lambda: mmd_rbf(real_train, synth_post).value),
        ("wasserstein", lambda: wasserstein_mean(real_train, synth_post).value),
    ):
        try:
            values[name] = compute()
        except MetricError as exc:
            values[name] = None
            missing.append((name, str(exc)))
    return FidelityResult(
        inverse_kl=values["inverse_kl"],
        mmd=values["mmd"],
        wasserstein=values["wasserstein"],
        missing=tuple(missing),
    )


_STAGE_ERRORS = (
    DataError,
    ProfileError,
    GeneratorError,
    LearnerError,
    MetricError,
    PipelineError,
    OSError,
)


def run_condition(config: RunConfig) -> RunResult:
    """Execute one condition; failures are recorded, not raised.

    Stage seeds all derive from ``config.seed``; the seeds carried by the
    profiler, generator, and roster specs are treated as templates and
    replaced, so the whole run varies coherently with the one run seed.
    """
    started = time.perf_counter()
    fields: dict = {
        "config": config,
        "dataset_identity": config.source.identity(config.noise),
    }
    warnings: list[str] = []
    test_access: list[str] = []
    stage = "load"
    try:
        data = config.source.load(derive_seed(config.seed, "dataset"))
        stage = "split"
        split = split_stratified(
            data, config.train_fraction, derive_seed(config.seed, "split")
        )
        train_set, test_set = split.train, split.test
        fields["n_train"] = train_set.n_rows
        fields["n_test"] = test_set.n_rows
        if config.noise > 0:
            stage = "noise"
            train_set, injection = inject_label_noise(
                train_set, config.noise, derive_seed(config.seed, "noise")
            )
            fields["flipped_count"] = len(injection.flipped_ids)
        stage = "profile"
        profiler = replace(config.profiler, seed=derive_seed(config.seed, "profile"))
        profile = profile_dataset(train_set, profiler)
        fields["train_profile_counts"] = profile.assignment.counts()
        stage = "preprocess"
        segments = preprocess(train_set, profile.assignment, config.preprocessing)
        stage = "fit"
        gen_spec = replace(config.generator, seed=derive_seed(config.seed, "generator"))
        seg_gen = fit_segmented(gen_spec, segments)
        fields["segment_fractions"] = {
            seg.tag: seg.fraction for seg in seg_gen.segments
        }
        stage = "sample"
        n_synth = round_half_away(config.synth_size_ratio * train_set.n_rows)
        synth = sample_segmented(seg_gen, n_synth, derive_seed(config.seed, "sample"))
        fields["n_synth"] = synth.n_rows
        stage = "postprocess"
        synth_post, post_assignment = postprocess(
            synth, profiler, config.postprocessing, config.seed
        )
        fields["n_synth_post"] = synth_post.n_rows
        if post_assignment is not None:
            fields["synth_profile_counts"] = post_assignment.counts()
        stage = "utility"
        fields["utility"] = evaluate_utility(
            train_set,
            synth_post,
            test_set,
            config.roster,
            derive_seed(config.seed, "evaluate"),
            config.importance_kind,
        )
        test_access.append("utility:auroc")
        stage = "fidelity"
        fields["fidelity"] = evaluate_fidelity(train_set, synth_post)
        if config.include_real_postprocess:
            stage = "real-postprocess"
            real_post, _ = postprocess(
                train_set, profiler, "no_hard", derive_seed(config.seed, "real-post")
            )
            fields["real_postprocess_utility"] = evaluate_utility(
                train_set,
                real_post,
                test_set,
                config.roster,
                derive_seed(config.seed, "evaluate-real-post"),
                config.importance_kind,
            )
            test_access.append("real-postprocess:auroc")
    except _STAGE_ERRORS as exc:
        fields["error"] = (stage, str(exc))
        warnings.append(f"run failed at stage {stage}")
    return RunResult(
        **fields,
        warnings=tuple(warnings),
        test_access=tuple(test_access),
        wall_clock_seconds=time.perf_counter() - started,
    )
