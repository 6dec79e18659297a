"""Profiling scores, noise-matrix estimation, and tag assignment rules."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dcsynth.data import simulate_dataset, inject_label_noise
from dcsynth.learners import CheckpointTrace, ClassifierSpec
from dcsynth.profiling import (
    AMBIGUOUS,
    EASY,
    HARD,
    ProfileAssignment,
    ProfileError,
    ProfilerConfig,
    SampleScore,
    assign_profiles,
    confident_learning_scores,
    detection_prf,
    estimate_noise_matrix,
    export_assignment_csv,
    profile_dataset,
    training_dynamics_scores,
)


def noise_matrix_oracle(oof, labels, tol=1e-12):
    """Independent confident-joint: plain loops, no vectorised shortcuts."""
    oof = [list(map(float, row)) for row in oof]
    labels = list(map(int, labels))
    thresholds = []
    for k in (0, 1):
        member_probs = [row[k] for row, y in zip(oof, labels) if y == k]
        thresholds.append(sum(member_probs) / len(member_probs))
    counts = [[0, 0], [0, 0]]
    for row, y in zip(oof, labels):
        best_class = None
        best_prob = None
        for k in (0, 1):  # ascending order makes ties pick the lower class
            if row[k] >= thresholds[k] - tol and (best_prob is None or row[k] > best_prob):
                best_class = k
                best_prob = row[k]
        if best_class is not None:
            counts[y][best_class] += 1
    return counts, thresholds


class TestDynamicsScores:
    def test_hand_computed_example(self):
        probs = np.array([[0.9, 0.7], [0.5, 0.5], [0.2, 0.4]])
        trace = CheckpointTrace(probs, (0, 10))
        scores = training_dynamics_scores(trace)
        np.testing.assert_allclose(scores.confidence, [0.8, 0.5, 0.3])
        np.testing.assert_allclose(
            scores.aleatoric, [(0.09 + 0.21) / 2, 0.25, (0.16 + 0.24) / 2]
        )
        np.testing.assert_allclose(scores.variability, [0.1, 0.0, 0.1])

    @settings(max_examples=300, deadline=None)
    @given(st.lists(st.lists(st.floats(0.0, 1.0), min_size=3, max_size=3), min_size=1, max_size=20))
    def test_score_bounds(self, rows):
        trace = CheckpointTrace(np.array(rows), (0, 5, 10))
        scores = training_dynamics_scores(trace)
        assert (scores.confidence >= 0.0).all() and (scores.confidence <= 1.0).all()
        assert (scores.aleatoric >= 0.0).all() and (scores.aleatoric <= 0.25 + 1e-12).all()
        assert (scores.variability >= 0.0).all() and (scores.variability <= 0.5 + 1e-12).all()


class TestConfidentLearningScores:
    def test_self_confidence_picks_own_label_column(self):
        oof = np.array([[0.9, 0.1], [0.3, 0.7], [0.6, 0.4]])
        labels = np.array([0, 1, 1])
        scores = confident_learning_scores(oof, labels)
        np.testing.assert_allclose(scores.self_confidence, [0.9, 0.7, 0.4])
        np.testing.assert_allclose(scores.hardness, [0.1, 0.3, 0.6])

    def test_shape_validation(self):
        with pytest.raises(ProfileError):
            confident_learning_scores(np.zeros((3, 3)), np.zeros(3, dtype=int))


class TestNoiseMatrix:
    def test_six_sample_example(self):
        # thresholds: t0 = mean(0.9, 0.8, 0.1) = 0.6, t1 = mean(0.8, 0.7, 0.6) = 0.7
        p1 = np.array([0.1, 0.2, 0.9, 0.8, 0.7, 0.6])
        oof = np.column_stack([1.0 - p1, p1])
        labels = np.array([0, 0, 0, 1, 1, 1])
        nm = estimate_noise_matrix(oof, labels)
        np.testing.assert_allclose(nm.thresholds, (0.6, 0.7))
        assert nm.counts == ((2, 1), (0, 2))
        assert nm.off_diagonal_count == 1
        total = sum(sum(row) for row in nm.counts)
        for i in (0, 1):
            for j in (0, 1):
                assert nm.joint[i][j] == nm.counts[i][j] / total

    def test_matches_brute_force_oracle(self):
        rng = np.random.default_rng(42)
        for _ in range(100):
            n = int(rng.integers(4, 40))
            labels = rng.integers(0, 2, n)
            labels[0], labels[1] = 0, 1
            p1 = rng.choice(np.linspace(0.0, 1.0, 9), size=n)
            oof = np.column_stack([1.0 - p1, p1])
            nm = estimate_noise_matrix(oof, labels)
            expected_counts, expected_thresholds = noise_matrix_oracle(oof, labels)
            assert [list(row) for row in nm.counts] == expected_counts
            np.testing.assert_allclose(nm.thresholds, expected_thresholds)

    def test_tie_goes_to_lower_class(self):
        # both classes pass their thresholds with identical probability 0.5
        oof = np.array([[0.5, 0.5], [0.5, 0.5], [0.4, 0.6], [0.6, 0.4]])
        labels = np.array([0, 1, 1, 0])
        nm = estimate_noise_matrix(oof, labels)
        oracle_counts, _ = noise_matrix_oracle(oof, labels)
        assert [list(r) for r in nm.counts] == oracle_counts

    def test_single_class_rejected(self):
        with pytest.raises(ProfileError, match="absent"):
            estimate_noise_matrix(np.array([[0.5, 0.5]]), np.array([0]))


class TestAssignmentRules:
    def scores(self, confidence, uncertainty, method="dataiq"):
        confidence = np.asarray(confidence, dtype=np.float64)
        uncertainty = np.asarray(uncertainty, dtype=np.float64)
        return SampleScore(
            method=method,
            confidence=confidence,
            aleatoric=uncertainty,
            variability=uncertainty,
        )

    def test_dataiq_band_rules(self):
        confidence = [0.10, 0.25, 0.26, 0.74, 0.75, 0.90, 0.10, 0.90]
        uncertainty = [0.10, 0.10, 0.10, 0.10, 0.10, 0.10, 0.30, 0.30]
        config = ProfilerConfig("dataiq", threshold_mode="value", tau=0.2)
        tags = assign_profiles(self.scores(confidence, uncertainty), config).tags
        # low-uncertainty rows split by the confidence bands (boundaries inclusive)
        assert tags.tolist() == [
            HARD, HARD, AMBIGUOUS, AMBIGUOUS, EASY, EASY,
            AMBIGUOUS, AMBIGUOUS,  # high uncertainty is always ambiguous
        ]

    def test_uncertainty_threshold_is_strict(self):
        config = ProfilerConfig("dataiq", threshold_mode="value", tau=0.2)
        tags = assign_profiles(self.scores([0.1, 0.1], [0.2, 0.19999]), config).tags
        assert tags.tolist() == [AMBIGUOUS, HARD]

    def test_percentile_mode_uses_observed_distribution(self):
        uncertainty = np.linspace(0.0, 0.2, 11)  # 50th percentile = 0.1
        confidence = np.full(11, 0.9)
        config = ProfilerConfig("datamaps", threshold_mode="percentile", tau=50)
        assignment = assign_profiles(self.scores(confidence, uncertainty, "datamaps"), config)
        assert abs(assignment.threshold_effective - 0.1) < 1e-12
        assert assignment.counts()[EASY] == int(np.sum(uncertainty < 0.1))

    def test_cleanlab_value_mode(self):
        scores = SampleScore(
            method="cleanlab",
            self_confidence=np.array([0.05, 0.19999, 0.2, 0.9]),
        )
        config = ProfilerConfig("cleanlab", threshold_mode="value", tau=0.2)
        tags = assign_profiles(scores, config).tags
        assert tags.tolist() == [HARD, HARD, EASY, EASY]
        assert AMBIGUOUS not in tags

    def test_cleanlab_default_mode_sizes_hard_set_from_matrix(self):
        p1 = np.array([0.1, 0.2, 0.9, 0.8, 0.7, 0.6])
        oof = np.column_stack([1.0 - p1, p1])
        labels = np.array([0, 0, 0, 1, 1, 1])
        nm = estimate_noise_matrix(oof, labels)  # off-diagonal count = 1
        scores = confident_learning_scores(oof, labels)
        config = ProfilerConfig("cleanlab", threshold_mode="default")
        assignment = assign_profiles(scores, config, noise_matrix=nm)
        assert assignment.counts()[HARD] == 1
        # the single hard row is the lowest self-confidence one (index 2: p=0.1)
        assert assignment.tags[2] == HARD

    def test_cleanlab_default_mode_requires_matrix(self):
        scores = SampleScore(method="cleanlab", self_confidence=np.array([0.5, 0.5]))
        with pytest.raises(ProfileError, match="noise matrix"):
            assign_profiles(scores, ProfilerConfig("cleanlab", threshold_mode="default"))

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.floats(0.0, 1.0), min_size=2, max_size=50), st.data())
    def test_cleanlab_hard_count_monotone_in_tau(self, self_conf, data):
        scores = SampleScore(method="cleanlab", self_confidence=np.array(self_conf))
        tau_low = data.draw(st.floats(0.01, 0.98))
        tau_high = data.draw(st.floats(tau_low, 0.99))
        config_low = ProfilerConfig("cleanlab", tau=tau_low)
        config_high = ProfilerConfig("cleanlab", tau=tau_high)
        hard_low = assign_profiles(scores, config_low).counts()[HARD]
        hard_high = assign_profiles(scores, config_high).counts()[HARD]
        assert hard_low <= hard_high

    @settings(max_examples=200, deadline=None)
    @given(
        st.lists(st.floats(0.0, 1.0), min_size=1, max_size=40),
        st.lists(st.floats(0.0, 0.25), min_size=1, max_size=40),
    )
    def test_tags_partition_rows(self, confidence, uncertainty):
        n = min(len(confidence), len(uncertainty))
        scores = self.scores(confidence[:n], uncertainty[:n])
        assignment = assign_profiles(scores, ProfilerConfig("dataiq", tau=0.1))
        counts = assignment.counts()
        assert sum(counts.values()) == n


class TestConfigValidation:
    def test_unknown_method(self):
        with pytest.raises(ProfileError, match="unknown profiling method"):
            ProfilerConfig("confident")

    def test_cleanlab_percentile_rejected(self):
        with pytest.raises(ProfileError, match="value or default"):
            ProfilerConfig("cleanlab", threshold_mode="percentile", tau=50)

    def test_dataiq_default_mode_rejected(self):
        with pytest.raises(ProfileError, match="value or percentile"):
            ProfilerConfig("dataiq", threshold_mode="default")

    def test_value_range_per_method(self):
        with pytest.raises(ProfileError):
            ProfilerConfig("dataiq", tau=0.3)  # above the aleatoric ceiling
        with pytest.raises(ProfileError):
            ProfilerConfig("cleanlab", tau=1.5)
        ProfilerConfig("cleanlab", tau=0.3)  # fine for cleanlab

    def test_percentile_range(self):
        with pytest.raises(ProfileError, match="20, 80"):
            ProfilerConfig("dataiq", threshold_mode="percentile", tau=10)

    def test_default_learners(self):
        assert ProfilerConfig("cleanlab").resolved_learner().kind == "logistic_regression"
        assert ProfilerConfig("dataiq").resolved_learner().kind == "gradient_boosting"
        custom = ClassifierSpec("random_forest", seed=3)
        assert ProfilerConfig("dataiq", learner=custom).resolved_learner() == custom


class TestDetectionPrf:
    def assignment(self, tags, row_ids=None):
        tags = np.asarray(tags, dtype="<U9")
        if row_ids is None:
            row_ids = np.arange(tags.shape[0])
        return ProfileAssignment(
            row_ids=np.asarray(row_ids), tags=tags, method="cleanlab",
            threshold_mode="value", threshold=0.2, threshold_effective=0.2,
        )

    def test_perfect_detection(self):
        assignment = self.assignment([HARD, HARD, EASY, EASY])
        precision, recall, f1 = detection_prf(assignment, [0, 1])
        assert (precision, recall, f1) == (1.0, 1.0, 1.0)

    def test_half_precision(self):
        assignment = self.assignment([HARD, HARD, EASY, EASY])
        precision, recall, f1 = detection_prf(assignment, [0, 2])
        assert precision == 0.5 and recall == 0.5 and abs(f1 - 0.5) < 1e-12

    def test_empty_hard_set_convention(self):
        assignment = self.assignment([EASY, EASY, EASY])
        assert detection_prf(assignment, [1]) == (0.0, 0.0, 0.0)

    def test_no_flips_convention(self):
        assignment = self.assignment([HARD, EASY])
        precision, recall, f1 = detection_prf(assignment, [])
        assert recall == 0.0 and f1 == 0.0
        assert precision == 0.0  # the lone hard row is a false positive

    def test_unknown_rows_rejected(self):
        assignment = self.assignment([HARD, EASY], row_ids=[10, 11])
        with pytest.raises(ProfileError, match="not part"):
            detection_prf(assignment, [3])


class TestProfileDataset:
    def test_cleanlab_flags_flipped_rows(self):
        data = simulate_dataset(10, 600, seed=1, rho=0.6)
        noisy, injection = inject_label_noise(data, 0.1, seed=2)
        result = profile_dataset(noisy, ProfilerConfig("cleanlab", seed=3))
        precision, recall, f1 = detection_prf(result.assignment, injection.flipped_ids)
        assert recall > 0.5
        assert precision > 0.3
        assert result.noise_matrix is not None

    def test_dynamics_methods_run_and_partition(self):
        data = simulate_dataset(5, 300, seed=4)
        for method in ("dataiq", "datamaps"):
            result = profile_dataset(data, ProfilerConfig(method, seed=5))
            counts = result.assignment.counts()
            assert sum(counts.values()) == 300
            assert result.noise_matrix is None

    def test_deterministic(self):
        data = simulate_dataset(4, 200, seed=6)
        a = profile_dataset(data, ProfilerConfig("cleanlab", seed=7))
        b = profile_dataset(data, ProfilerConfig("cleanlab", seed=7))
        np.testing.assert_array_equal(a.assignment.tags, b.assignment.tags)
        np.testing.assert_allclose(a.scores.self_confidence, b.scores.self_confidence)

    def test_export_csv(self, tmp_path):
        data = simulate_dataset(3, 120, seed=8)
        result = profile_dataset(data, ProfilerConfig("dataiq", seed=9))
        out = tmp_path / "profile.csv"
        export_assignment_csv(result, out)
        lines = out.read_text().strip().splitlines()
        assert lines[0] == "row_id,method,tag,confidence,aleatoric,variability"
        assert len(lines) == 121
