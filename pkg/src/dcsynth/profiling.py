"""Per-sample hardness profiling: easy / ambiguous / hard.

Three methods are supported. ``dataiq`` and ``datamaps`` score samples
from a checkpoint trace of a single training run (confidence = mean
probability of the own label; uncertainty = mean p(1-p) for dataiq, the
population standard deviation of p for datamaps). ``cleanlab`` scores
samples from out-of-fold predicted probabilities (self-confidence = the
probability assigned to the observed label) and can size its hard set
from an estimated label-noise matrix instead of a fixed cutoff.

Assignment rules:

- dataiq / datamaps: hard iff confidence <= 0.25 and uncertainty below the
  effective threshold; easy iff confidence >= 0.75 and uncertainty below
  it; everything else ambiguous. In ``value`` mode the effective threshold
  is tau itself, in ``percentile`` mode it is the tau-th percentile
  (linear interpolation) of the observed uncertainty values.
- cleanlab: ``value`` mode marks self-confidence < tau hard; ``default``
  mode marks the m lowest-self-confidence samples hard, where m is the
  off-diagonal count of the estimated noise matrix. Everything not hard is
  easy; cleanlab never produces ambiguous.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from dcsynth.data import Dataset
from dcsynth.learners import (
    CheckpointTrace,
    ClassifierSpec,
    out_of_fold_proba,
    train_with_checkpoints,
)
from dcsynth.rng import derive_seed

EASY = "easy"
AMBIGUOUS = "ambiguous"
HARD = "hard"
TAGS = (EASY, AMBIGUOUS, HARD)

METHODS = ("cleanlab", "dataiq", "datamaps")
DYNAMICS_METHODS = ("dataiq", "datamaps")

# slack for the confident-joint pass rule, absorbing float error in the
# per-class mean so that probabilities equal to the threshold still pass
_THRESHOLD_TOL = 1e-12


class ProfileError(ValueError):
    """Invalid profiler configuration or incompatible inputs."""


@dataclass
class SampleScore:
    """Per-sample profiling scores; which fields are set depends on method."""

    method: str
    confidence: np.ndarray | None = None
    aleatoric: np.ndarray | None = None
    variability: np.ndarray | None = None
    self_confidence: np.ndarray | None = None
    hardness: np.ndarray | None = None

    @property
    def n_rows(self) -> int:
        for arr in (self.confidence, self.self_confidence):
            if arr is not None:
                return arr.shape[0]
        raise ProfileError("empty score object")


@dataclass
class ProfileAssignment:
    """Easy/ambiguous/hard tag per row, plus the rule that produced it."""

    row_ids: np.ndarray
    tags: np.ndarray
    method: str
    threshold_mode: str
    threshold: float
    threshold_effective: float

    def counts(self) -> dict[str, int]:
        return {tag: int(np.sum(self.tags == tag)) for tag in TAGS}

    def ids_tagged(self, tag: str) -> np.ndarray:
        return self.row_ids[self.tags == tag]


@dataclass(frozen=True)
class NoiseMatrix:
    """Confident-joint counts C[observed][predicted] and its normalisation."""

    counts: tuple[tuple[int, int], tuple[int, int]]
    joint: tuple[tuple[float, float], tuple[float, float]]
    thresholds: tuple[float, float]

    @property
    def off_diagonal_count(self) -> int:
        return self.counts[0][1] + self.counts[1][0]


@dataclass(frozen=True)
class ProfilerConfig:
    method: str
    threshold_mode: str = "value"
    tau: float = 0.2
    learner: ClassifierSpec | None = None
    n_checkpoints: int = 20
    n_folds: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ProfileError(f"unknown profiling method {self.method!r}")
        if self.method == "cleanlab":
            if self.threshold_mode not in ("value", "default"):
                raise ProfileError("cleanlab supports value or default threshold modes")
            if self.threshold_mode == "value" and not 0.0 < self.tau < 1.0:
                raise ProfileError("cleanlab value-mode tau must be in (0, 1)")
        else:
            if self.threshold_mode not in ("value", "percentile"):
                raise ProfileError(f"{self.method} supports value or percentile threshold modes")
            if self.threshold_mode == "value" and not 0.0 < self.tau <= 0.25:
                raise ProfileError(f"{self.method} value-mode tau must be in (0, 0.25]")
        if self.threshold_mode == "percentile" and not 20.0 <= self.tau <= 80.0:
            raise ProfileError("percentile-mode tau must be in [20, 80]")
        if self.n_checkpoints < 2:
            raise ProfileError("n_checkpoints must be at least 2")
        if self.n_folds < 2:
            raise ProfileError("n_folds must be at least 2")

    def resolved_learner(self) -> ClassifierSpec:
        if self.learner is not None:
            return self.learner
        if self.method == "cleanlab":
            return ClassifierSpec("logistic_regression", seed=derive_seed(self.seed, "oof-learner"))
        return ClassifierSpec("gradient_boosting", seed=derive_seed(self.seed, "trace-learner"))


@dataclass
class ProfileResult:
    scores: SampleScore
    assignment: ProfileAssignment
    noise_matrix: NoiseMatrix | None = None


def training_dynamics_scores(trace: CheckpointTrace) -> SampleScore:
    """Confidence, aleatoric uncertainty, and variability from a trace.

    confidence_i = mean_t p_it, aleatoric_i = mean_t p_it (1 - p_it),
    variability_i = population std of p_it, where p_it is the probability
    of sample i's own label at checkpoint t.
    """
    probs = trace.probs
    confidence = probs.mean(axis=1)
    aleatoric = (probs * (1.0 - probs)).mean(axis=1)
    variability = probs.std(axis=1)
    return SampleScore(
        method="dynamics", confidence=confidence, aleatoric=aleatoric, variability=variability
    )


def confident_learning_scores(oof: np.ndarray, labels: np.ndarray) -> SampleScore:
    """Self-confidence (probability of the observed label) and its complement."""
    oof = np.asarray(oof, dtype=np.float64)
    labels = np.asarray(labels)
    if oof.ndim != 2 or oof.shape[1] != 2 or oof.shape[0] != labels.shape[0]:
        raise ProfileError("need an (n, 2) probability matrix aligned with labels")
    self_confidence = oof[np.arange(labels.shape[0]), labels]
    return SampleScore(
        method="cleanlab", self_confidence=self_confidence, hardness=1.0 - self_confidence
    )


def estimate_noise_matrix(oof: np.ndarray, labels: np.ndarray) -> NoiseMatrix:
    """Confident-joint estimate of the label-noise matrix.

    The per-class threshold t_k is the mean out-of-fold probability of
    class k over samples observed as k. A sample counts into cell
    (observed, predicted) where predicted is the highest-probability class
    among those clearing their threshold (ties to the lower class index);
    samples clearing no threshold count nowhere.
    """
    oof = np.asarray(oof, dtype=np.float64)
    labels = np.asarray(labels)
    if oof.ndim != 2 or oof.shape[1] != 2 or oof.shape[0] != labels.shape[0]:
        raise ProfileError("need an (n, 2) probability matrix aligned with labels")
    thresholds = []
    for k in (0, 1):
        members = labels == k
        if not members.any():
            raise ProfileError(f"class {k} absent; noise matrix undefined")
        thresholds.append(float(oof[members, k].mean()))
    counts = np.zeros((2, 2), dtype=np.int64)
    # tolerance keeps exact-arithmetic ties (p equal to the class mean) on the
    # passing side despite rounding in the mean itself
    passing = oof >= np.asarray(thresholds)[None, :] - _THRESHOLD_TOL
    for i in range(labels.shape[0]):
        candidates = np.flatnonzero(passing[i])
        if candidates.size == 0:
            continue
        # argmax over passing classes; ties resolve to the lower class index
        predicted = candidates[np.argmax(oof[i, candidates])]
        counts[labels[i], predicted] += 1
    total = counts.sum()
    if total == 0:
        joint = np.zeros((2, 2))
    else:
        joint = counts / total
    return NoiseMatrix(
        counts=tuple(tuple(int(v) for v in row) for row in counts),
        joint=tuple(tuple(float(v) for v in row) for row in joint),
        thresholds=(thresholds[0], thresholds[1]),
    )


def assign_profiles(
    scores: SampleScore,
    config: ProfilerConfig,
    row_ids: np.ndarray | None = None,
    noise_matrix: NoiseMatrix | None = None,
) -> ProfileAssignment:
    """Apply the configured thresholding rule to per-sample scores."""
    if config.method == "cleanlab":
        if scores.self_confidence is None:
            raise ProfileError("cleanlab assignment needs self-confidence scores")
        n = scores.self_confidence.shape[0]
    else:
        if scores.confidence is None:
            raise ProfileError(f"{config.method} assignment needs training-dynamics scores")
        n = scores.confidence.shape[0]
    if row_ids is None:
        row_ids = np.arange(n, dtype=np.int64)
    row_ids = np.asarray(row_ids, dtype=np.int64)
    if row_ids.shape != (n,):
        raise ProfileError("row_ids must align with scores")

    tags = np.full(n, AMBIGUOUS, dtype="<U9")
    if config.method == "cleanlab":
        effective = config.tau
        if config.threshold_mode == "value":
            hard = scores.self_confidence < config.tau
        else:  # default mode: noise matrix sizes the hard set
            if noise_matrix is None:
                raise ProfileError("cleanlab default mode needs a noise matrix")
            m = noise_matrix.off_diagonal_count
            order = np.argsort(scores.self_confidence, kind="mergesort")
            hard = np.zeros(n, dtype=bool)
            hard[order[:m]] = True
            effective = float(scores.self_confidence[order[m - 1]]) if m > 0 else 0.0
        tags[:] = EASY
        tags[hard] = HARD
    else:
        uncertainty = scores.aleatoric if config.method == "dataiq" else scores.variability
        if uncertainty is None:
            raise ProfileError(f"{config.method} scores missing uncertainty values")
        if config.threshold_mode == "value":
            effective = config.tau
        else:
            effective = float(np.percentile(uncertainty, config.tau))
        low_uncertainty = uncertainty < effective
        tags[(scores.confidence <= 0.25) & low_uncertainty] = HARD
        tags[(scores.confidence >= 0.75) & low_uncertainty] = EASY

    return ProfileAssignment(
        row_ids=row_ids,
        tags=tags,
        method=config.method,
        threshold_mode=config.threshold_mode,
        threshold=config.tau,
        threshold_effective=float(effective),
    )


def profile_dataset(data: Dataset, config: ProfilerConfig) -> ProfileResult:
    """Score and tag every row of ``data`` under the configured method."""
    learner = config.resolved_learner()
    if config.method == "cleanlab":
        oof = out_of_fold_proba(learner, data, config.n_folds, seed=derive_seed(config.seed, "oof"))
        scores = confident_learning_scores(oof, data.labels)
        noise_matrix = estimate_noise_matrix(oof, data.labels)
        assignment = assign_profiles(scores, config, row_ids=data.row_ids, noise_matrix=noise_matrix)
        return ProfileResult(scores, assignment, noise_matrix)
    _, trace = train_with_checkpoints(learner, data, config.n_checkpoints)
    scores = training_dynamics_scores(trace)
    scores.method = config.method
    assignment = assign_profiles(scores, config, row_ids=data.row_ids)
    return ProfileResult(scores, assignment)


def detection_prf(
    assignment: ProfileAssignment, flipped_ids
) -> tuple[float, float, float]:
    """Precision/recall/F1 of the hard set against known flipped rows.

    Degenerate conventions: precision is 0 with an empty hard set, recall
    is 0 with no flipped rows, F1 is 0 when precision + recall is 0.
    """
    flipped = frozenset(int(i) for i in flipped_ids)
    known = set(int(i) for i in assignment.row_ids)
    if not flipped <= known:
        raise ProfileError("flipped rows are not part of the assignment")
    hard = set(int(i) for i in assignment.ids_tagged(HARD))
    tp = len(hard & flipped)
    precision = tp / len(hard) if hard else 0.0
    recall = tp / len(flipped) if flipped else 0.0
    f1 = 2.0 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return precision, recall, f1


def export_assignment_csv(result: ProfileResult, path) -> None:
    """Write row_id, tag, and all defined score columns to CSV."""
    import csv

    scores = result.scores
    columns: list[tuple[str, np.ndarray]] = []
    for name in ("confidence", "aleatoric", "variability", "self_confidence", "hardness"):
        arr = getattr(scores, name)
        if arr is not None:
            columns.append((name, arr))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["row_id", "method", "tag"] + [name for name, _ in columns])
        assignment = result.assignment
        for i in range(assignment.row_ids.shape[0]):
            row = [int(assignment.row_ids[i]), assignment.method, str(assignment.tags[i])]
            row += [repr(float(arr[i])) for _, arr in columns]
            writer.writerow(row)
