"""CLI contract tests: exit codes, resume, validation anchoring, outputs."""

import json
from pathlib import Path

import pytest
from click.testing import CliRunner

from dcsynth.cli import ConfigError, main, parse_seed_list, resolve_out_dir
from dcsynth.data import load_csv, simulate_dataset, write_csv
from dcsynth.generators import from_json, sample

EXPERIMENT_YAML = """\
version: 1
output_dir: {out}
jobs: 1
datasets:
  - name: toy
    n_features: 4
    n_samples: 240
    seed: 11
profilers:
  - method: cleanlab
    learner:
      kind: logistic_regression
      n_iters: 60
generators:
  - kind: marginal_hist
    bins: 4
strategies:
  - [baseline, baseline]
  - [easy_hard, no_hard]
seeds: [0, 1]
noise_levels: [0.1]
roster:
  - kind: logistic_regression
    n_iters: 60
  - gaussian_nb
importance_kind: logistic_regression
"""

BENCH_YAML = """\
version: 1
shapes:
  - [4, 240]
noise_levels: [0.1]
seeds: [0]
n_checkpoints: 6
"""


@pytest.fixture(autouse=True)
def no_env_override(monkeypatch):
    monkeypatch.delenv("DCSYNTH_OUT", raising=False)


@pytest.fixture
def runner():
    return CliRunner()


def write_experiment(tmp_path, out_name="results", **edits):
    text = EXPERIMENT_YAML.format(out=tmp_path / out_name)
    for old, new in edits.items():
        text = text.replace(old, new)
    path = tmp_path / "exp.yaml"
    path.write_text(text)
    return path


class TestSeedParsing:
    def test_comma_list(self):
        assert parse_seed_list("0, 2,9") == (0, 2, 9)

    def test_range_inclusive(self):
        assert parse_seed_list("1..4") == (1, 2, 3, 4)

    def test_mixed(self):
        assert parse_seed_list("0,5..7") == (0, 5, 6, 7)

    def test_bad_entry(self):
        with pytest.raises(ConfigError):
            parse_seed_list("two")
        with pytest.raises(ConfigError):
            parse_seed_list("5..2")


class TestOutDirPrecedence:
    def test_env_wins(self, monkeypatch):
        monkeypatch.setenv("DCSYNTH_OUT", "/tmp/envdir")
        assert resolve_out_dir("/tmp/flag", "/tmp/config") == Path("/tmp/envdir")

    def test_flag_beats_config(self):
        assert resolve_out_dir("/tmp/flag", "/tmp/config") == Path("/tmp/flag")

    def test_config_then_default(self):
        assert resolve_out_dir(None, "/tmp/config") == Path("/tmp/config")
        assert resolve_out_dir(None, None) == Path("results")


class TestRunCommand:
    def test_grid_executes_and_resumes(self, runner, tmp_path):
        config = write_experiment(tmp_path)
        out = tmp_path / "results"
        first = runner.invoke(main, ["run", "--config", str(config)])
        assert first.exit_code == 0, first.output
        assert "4 executed, 0 reused" in first.output
        run_files = sorted(out.glob("toy-n10_*.json"))
        assert len(run_files) == 4
        assert (out / "aggregate.csv").exists()
        assert (out / "deltas_vs_baseline.csv").exists()

        stamps = {p: p.stat().st_mtime_ns for p in run_files}
        second = runner.invoke(main, ["run", "--config", str(config)])
        assert second.exit_code == 0
        assert "0 executed, 4 reused" in second.output
        assert {p: p.stat().st_mtime_ns for p in run_files} == stamps

        forced = runner.invoke(
            main, ["run", "--config", str(config), "--seeds", "0", "--force"]
        )
        assert forced.exit_code == 0
        assert "2 executed, 0 reused" in forced.output

    def test_seeds_flag_controls_grid(self, runner, tmp_path):
        config = write_experiment(tmp_path)
        out = tmp_path / "results"
        result = runner.invoke(
            main, ["run", "--config", str(config), "--seeds", "5..7"]
        )
        assert result.exit_code == 0
        # 1 dataset x 1 profiler x 1 generator x 2 strategies x 1 noise x 3 seeds
        assert len(list(out.glob("toy-n10_*.json"))) == 6
        assert len(list(out.glob("*_5.json"))) == 2

    def test_empty_grid_header_only(self, runner, tmp_path):
        config = tmp_path / "empty.yaml"
        config.write_text("version: 1\ndatasets: []\n")
        out = tmp_path / "eout"
        result = runner.invoke(main, ["run", "--config", str(config), "--out", str(out)])
        assert result.exit_code == 0, result.output
        assert (out / "aggregate.csv").read_text() == "metric,mean,ci_low,ci_high,n,missing\n"

    def test_unknown_key_line_anchored(self, runner, tmp_path):
        config = tmp_path / "bad.yaml"
        config.write_text("version: 1\ndatasets: []\nflavor: spicy\n")
        result = runner.invoke(main, ["run", "--config", str(config)])
        assert result.exit_code == 2
        assert "bad.yaml:3" in result.output
        assert "flavor" in result.output

    def test_wrong_version(self, runner, tmp_path):
        config = tmp_path / "v9.yaml"
        config.write_text("version: 9\ndatasets: []\n")
        result = runner.invoke(main, ["run", "--config", str(config)])
        assert result.exit_code == 2
        assert "version" in result.output

    def test_missing_config_file(self, runner, tmp_path):
        result = runner.invoke(main, ["run", "--config", str(tmp_path / "nope.yaml")])
        assert result.exit_code == 2

    def test_invalid_dataset_anchored(self, runner, tmp_path):
        config = tmp_path / "ds.yaml"
        config.write_text("version: 1\ndatasets:\n  - name: broken\n")
        result = runner.invoke(main, ["run", "--config", str(config)])
        assert result.exit_code == 2
        assert "ds.yaml:3" in result.output

    def test_duplicate_generators_rejected(self, runner, tmp_path):
        config = tmp_path / "dup.yaml"
        config.write_text(
            "version: 1\ndatasets: []\ngenerators:\n"
            "  - kind: gmm\n  - kind: gmm\n"
        )
        result = runner.invoke(main, ["run", "--config", str(config)])
        assert result.exit_code == 2
        assert "collide" in result.output

    def test_failed_run_exits_one(self, runner, tmp_path):
        config = tmp_path / "fail.yaml"
        config.write_text(
            "version: 1\n"
            f"output_dir: {tmp_path / 'fout'}\n"
            "datasets:\n"
            f"  - path: {tmp_path / 'missing.csv'}\n"
        )
        result = runner.invoke(main, ["run", "--config", str(config)])
        assert result.exit_code == 1
        assert "1 runs recorded errors" in result.output
        files = list((tmp_path / "fout").glob("missing_*.json"))
        assert len(files) == 1
        doc = json.loads(files[0].read_text())
        assert doc["error"]["stage"] == "load"


class TestProfileCommand:
    @pytest.fixture
    def sim_csv(self, tmp_path):
        path = tmp_path / "sim.csv"
        write_csv(simulate_dataset(4, 300, seed=3), path)
        return path

    def test_row_count_and_summary(self, runner, sim_csv, tmp_path):
        out = tmp_path / "profiles.csv"
        result = runner.invoke(
            main, ["profile", str(sim_csv), "--method", "cleanlab", "--out", str(out)]
        )
        assert result.exit_code == 0, result.output
        assert "300 rows" in result.output
        assert len(out.read_text().strip().split("\n")) == 301

    def test_clean_data_low_hard_fraction(self, runner, sim_csv):
        result = runner.invoke(main, ["profile", str(sim_csv)])
        assert result.exit_code == 0
        hard = int(result.output.split("hard=")[1].split()[0])
        assert hard / 300 <= 0.05

    def test_default_output_path(self, runner, sim_csv):
        result = runner.invoke(main, ["profile", str(sim_csv)])
        assert result.exit_code == 0
        assert sim_csv.with_name("sim_profiles.csv").exists()

    def test_invalid_method_exit_two(self, runner, sim_csv):
        result = runner.invoke(main, ["profile", str(sim_csv), "--method", "astrology"])
        assert result.exit_code == 2

    def test_invalid_tau_exit_two(self, runner, sim_csv):
        result = runner.invoke(
            main,
            ["profile", str(sim_csv), "--threshold-mode", "value", "--tau", "-3"],
        )
        assert result.exit_code == 2


class TestGenerateCommand:
    @pytest.fixture
    def sim_csv(self, tmp_path):
        path = tmp_path / "train.csv"
        write_csv(simulate_dataset(3, 200, seed=5), path)
        return path

    def test_sample_count_default_and_override(self, runner, sim_csv, tmp_path):
        out = tmp_path / "synth.csv"
        result = runner.invoke(main, ["generate", str(sim_csv), "--out", str(out)])
        assert result.exit_code == 0, result.output
        assert load_csv(out, "label").n_rows == 200
        result = runner.invoke(
            main, ["generate", str(sim_csv), "--out", str(out), "--n", "50"]
        )
        assert result.exit_code == 0
        assert load_csv(out, "label").n_rows == 50

    def test_deterministic_bytes(self, runner, sim_csv, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        for out in (a, b):
            result = runner.invoke(
                main, ["generate", str(sim_csv), "--out", str(out), "--seed", "7"]
            )
            assert result.exit_code == 0
        assert a.read_bytes() == b.read_bytes()

    def test_model_out_round_trips(self, runner, sim_csv, tmp_path):
        model_path = tmp_path / "model.json"
        result = runner.invoke(
            main,
            [
                "generate", str(sim_csv), "--out", str(tmp_path / "s.csv"),
                "--model-out", str(model_path), "--kind", "gmm", "--seed", "4",
            ],
        )
        assert result.exit_code == 0, result.output
        generator = from_json(model_path.read_text())
        assert sample(generator, 10, seed=0).n_rows == 10


class TestSimulateAndEvaluate:
    def test_simulate_shape(self, runner, tmp_path):
        out = tmp_path / "data.csv"
        result = runner.invoke(
            main,
            ["simulate", "--n-features", "5", "--n-samples", "120", "--out", str(out)],
        )
        assert result.exit_code == 0
        data = load_csv(out, "label")
        assert data.n_rows == 120 and len(data.schema) == 5

    def test_simulate_validation(self, runner, tmp_path):
        result = runner.invoke(
            main,
            ["simulate", "--n-features", "0", "--n-samples", "10",
             "--out", str(tmp_path / "x.csv")],
        )
        assert result.exit_code == 2

    def test_evaluate_emits_json(self, runner, tmp_path):
        real = tmp_path / "real.csv"
        write_csv(simulate_dataset(3, 240, seed=2), real)
        synth = tmp_path / "synth.csv"
        result = runner.invoke(main, ["generate", str(real), "--out", str(synth)])
        assert result.exit_code == 0
        result = runner.invoke(
            main,
            ["evaluate", str(real), str(synth), "--importance-kind", "logistic_regression"],
        )
        assert result.exit_code == 0, result.output
        doc = json.loads(result.output)
        assert doc["utility"]["members"]
        assert "inverse_kl" in doc["fidelity"]


class TestThresholdBenchCommand:
    def test_outputs_and_resume(self, runner, tmp_path):
        config = tmp_path / "bench.yaml"
        config.write_text(BENCH_YAML)
        out = tmp_path / "bench_out"
        result = runner.invoke(
            main, ["threshold-bench", "--config", str(config), "--out", str(out)]
        )
        assert result.exit_code == 0, result.output
        summary = (out / "threshold_summary.csv").read_text()
        assert summary.startswith("method,threshold_mode,tau,")
        # 3 methods x 5 value taus + 2 x 7 percentile + 1 default row + header
        assert len(summary.strip().split("\n")) == 31
        cells = json.loads((out / "threshold_cells.json").read_text())
        assert len(cells) == 30
        assert (out / "threshold_f1.png").exists()

        again = runner.invoke(
            main, ["threshold-bench", "--config", str(config), "--out", str(out)]
        )
        assert again.exit_code == 0
        assert "reusing" in again.output

    def test_deterministic_summary(self, runner, tmp_path):
        config = tmp_path / "bench.yaml"
        config.write_text(BENCH_YAML)
        outs = [tmp_path / "d1", tmp_path / "d2"]
        for out in outs:
            result = runner.invoke(
                main, ["threshold-bench", "--config", str(config), "--out", str(out)]
            )
            assert result.exit_code == 0
        assert (outs[0] / "threshold_summary.csv").read_bytes() == (
            outs[1] / "threshold_summary.csv"
        ).read_bytes()

    def test_bad_config_exit_two(self, runner, tmp_path):
        config = tmp_path / "bad.yaml"
        config.write_text("version: 1\nshapes: []\n")
        result = runner.invoke(main, ["threshold-bench", "--config", str(config)])
        assert result.exit_code == 2


class TestNoiseSweepCommand:
    def test_sweep_outputs(self, runner, tmp_path):
        config = write_experiment(tmp_path, out_name="sweep_out")
        out = tmp_path / "sweep_out"
        result = runner.invoke(
            main, ["noise-sweep", "--config", str(config), "--seeds", "0"]
        )
        assert result.exit_code == 0, result.output
        # 1 noise level x 1 generator x 2 strategies x 1 seed
        assert len(list(out.glob("toy*_*.json"))) == 2
        ref = (out / "real_reference_toy_cleanlab.csv").read_text()
        assert ref.startswith("noise,seed,mean_auroc,logistic_regression,gaussian_nb")
        assert len(ref.strip().split("\n")) == 2
        assert (out / "aggregate.csv").exists()

    def test_needs_dataset(self, runner, tmp_path):
        config = tmp_path / "nods.yaml"
        config.write_text("version: 1\ndatasets: []\n")
        result = runner.invoke(main, ["noise-sweep", "--config", str(config)])
        assert result.exit_code == 2


class TestReportCommand:
    def test_report_from_run_dir(self, runner, tmp_path):
        config = write_experiment(tmp_path)
        assert runner.invoke(main, ["run", "--config", str(config)]).exit_code == 0
        out = tmp_path / "rpt"
        result = runner.invoke(
            main,
            ["report", "--results", str(tmp_path / "results"), "--out", str(out)],
        )
        assert result.exit_code == 0, result.output
        assert (out / "aggregate_by_strategy.csv").exists()
        assert (out / "aggregate_by_noise.csv").exists()
        assert (out / "deltas_vs_baseline.csv").exists()
        assert (out / "auroc_synth_by_strategy.png").exists()

    def test_empty_results_dir(self, runner, tmp_path):
        empty = tmp_path / "none"
        empty.mkdir()
        result = runner.invoke(main, ["report", "--results", str(empty)])
        assert result.exit_code == 1

    def test_json_format(self, runner, tmp_path):
        config = write_experiment(tmp_path)
        assert runner.invoke(
            main, ["run", "--config", str(config), "--seeds", "0"]
        ).exit_code == 0
        out = tmp_path / "rptj"
        result = runner.invoke(
            main,
            ["report", "--results", str(tmp_path / "results"),
             "--out", str(out), "--format", "json"],
        )
        assert result.exit_code == 0
        docs = json.loads((out / "aggregate_by_strategy.json").read_text())
        assert docs and "metric" in docs[0]


class TestEnvOverride:
    def test_dcsynth_out(self, runner, tmp_path, monkeypatch):
        monkeypatch.setenv("DCSYNTH_OUT", str(tmp_path / "envout"))
        config = tmp_path / "empty.yaml"
        config.write_text("version: 1\ndatasets: []\n")
        result = runner.invoke(
            main, ["run", "--config", str(config), "--out", str(tmp_path / "flagout")]
        )
        assert result.exit_code == 0
        assert (tmp_path / "envout" / "aggregate.csv").exists()
        assert not (tmp_path / "flagout").exists()
