import csv
import json

import numpy as np
import pytest
from click.testing import CliRunner

from rocket_forge.cli import main, stratified_split

SMALL_SYNTH = {
    "seed": 6, "n_samples": 60, "n_channels": 8, "n_timesteps": 400,
    "sensor_noise_sd": 2.0, "occlusion_probability": 0.0,
    "correlation_length": 8.0, "label_cutoff": 100.0,
}


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def small_inputs(tmp_path, runner):
    """A tiny kernel bank and synth config shared by pipeline-style tests."""
    kernels = tmp_path / "kernels.json"
    result = runner.invoke(main, [
        "gen-kernels", "--seed", "4", "--num-kernels", "200",
        "--input-length", "400", "--channels", "8", "--out", str(kernels)])
    assert result.exit_code == 0, result.output
    synth = tmp_path / "synth.json"
    synth.write_text(json.dumps(SMALL_SYNTH))
    return kernels, synth


class TestGenKernels:
    def test_writes_file_and_manifest(self, tmp_path, runner):
        out = tmp_path / "bank.json"
        result = runner.invoke(main, [
            "gen-kernels", "--num-kernels", "100", "--input-length", "512",
            "--channels", "1", "--out", str(out)])
        assert result.exit_code == 0, result.output
        assert "100 kernels" in result.output
        doc = json.loads(out.read_text())
        assert len(doc["kernels"]) == 100
        manifest = json.loads((tmp_path / "bank.json.manifest.json").read_text())
        assert manifest["command"] == "gen-kernels"
        assert manifest["seeds"] == {"seed": 0}

    def test_missing_out_is_usage_error(self, runner):
        result = runner.invoke(main, [
            "gen-kernels", "--num-kernels", "10", "--input-length", "100",
            "--channels", "1"])
        assert result.exit_code == 2

    def test_deterministic_bytes(self, tmp_path, runner):
        paths = [tmp_path / "a.json", tmp_path / "b.json"]
        for path in paths:
            result = runner.invoke(main, [
                "gen-kernels", "--seed", "9", "--num-kernels", "30",
                "--input-length", "128", "--channels", "2", "--out", str(path)])
            assert result.exit_code == 0, result.output
        assert paths[0].read_bytes() == paths[1].read_bytes()

    def test_domain_error_exits_1(self, tmp_path, runner):
        result = runner.invoke(main, [
            "gen-kernels", "--num-kernels", "10", "--input-length", "5",
            "--channels", "1", "--out", str(tmp_path / "x.json")])
        assert result.exit_code == 1


class TestSynth:
    def test_writes_dataset(self, tmp_path, runner):
        prefix = tmp_path / "steel"
        result = runner.invoke(main, [
            "synth", "--n-samples", "10", "--channels", "3",
            "--timesteps", "700", "--out-prefix", str(prefix)])
        assert result.exit_code == 0, result.output
        raw = (tmp_path / "steel.rkds").read_bytes()
        assert raw[:4] == b"RKDS"
        assert np.frombuffer(raw[4:20], "<u4").tolist() == [1, 10, 3, 700]
        labels = (tmp_path / "steel_labels.csv").read_text().splitlines()
        assert labels[0] == "example_id,ra"
        assert len(labels) == 11
        assert (tmp_path / "steel.manifest.json").exists()

    def test_same_seed_byte_identical(self, tmp_path, runner):
        blobs = []
        for name in ("one", "two"):
            prefix = tmp_path / name
            result = runner.invoke(main, [
                "synth", "--seed", "5", "--n-samples", "4", "--channels", "2",
                "--timesteps", "700", "--out-prefix", str(prefix)])
            assert result.exit_code == 0, result.output
            blobs.append((tmp_path / f"{name}.rkds").read_bytes())
        assert blobs[0] == blobs[1]

    def test_zero_samples_valid(self, tmp_path, runner):
        prefix = tmp_path / "empty"
        result = runner.invoke(main, [
            "synth", "--n-samples", "0", "--timesteps", "700",
            "--out-prefix", str(prefix)])
        assert result.exit_code == 0, result.output
        raw = (tmp_path / "empty.rkds").read_bytes()
        assert np.frombuffer(raw[4:20], "<u4").tolist()[1] == 0


class TestPipeline:
    def test_synthetic_run_beats_baseline(self, tmp_path, runner, small_inputs):
        kernels, synth = small_inputs
        out_dir = tmp_path / "run"
        result = runner.invoke(main, [
            "pipeline", "--synth-config", str(synth), "--kernels", str(kernels),
            "--seed", "1", "--out-dir", str(out_dir)])
        assert result.exit_code == 0, result.output
        metrics = json.loads((out_dir / "metrics.json").read_text())
        assert set(metrics) >= {"train_mse", "test_mse", "baseline_mse"}
        assert metrics["test_mse"] < metrics["baseline_mse"]
        for name in ("features.csv", "model.json", "predictions.csv",
                     "manifest.json"):
            assert (out_dir / name).exists()

    def test_degenerate_split_is_usage_error(self, tmp_path, runner, small_inputs):
        kernels, synth = small_inputs
        result = runner.invoke(main, [
            "pipeline", "--synth-config", str(synth), "--kernels", str(kernels),
            "--train-test-split", "1.0", "--out-dir", str(tmp_path / "x")])
        assert result.exit_code == 2

    def test_requires_a_dataset_source(self, tmp_path, runner, small_inputs):
        kernels, _ = small_inputs
        result = runner.invoke(main, [
            "pipeline", "--kernels", str(kernels), "--out-dir", str(tmp_path / "x")])
        assert result.exit_code == 2

    def test_rkds_source_round_trip(self, tmp_path, runner, small_inputs):
        kernels, synth = small_inputs
        prefix = tmp_path / "ds"
        result = runner.invoke(main, [
            "synth", "--seed", "6", "--n-samples", "60", "--channels", "8",
            "--timesteps", "400", "--noise-sd", "2.0", "--occlusion-prob", "0",
            "--correlation-length", "8.0", "--label-cutoff", "100.0",
            "--out-prefix", str(prefix)])
        assert result.exit_code == 0, result.output
        out_a = tmp_path / "from_files"
        result = runner.invoke(main, [
            "pipeline", "--data", str(tmp_path / "ds.rkds"),
            "--labels", str(tmp_path / "ds_labels.csv"),
            "--kernels", str(kernels), "--seed", "1", "--out-dir", str(out_a)])
        assert result.exit_code == 0, result.output
        out_b = tmp_path / "from_synth"
        result = runner.invoke(main, [
            "pipeline", "--synth-config", str(synth), "--kernels", str(kernels),
            "--seed", "1", "--out-dir", str(out_b)])
        assert result.exit_code == 0, result.output
        metrics_a = json.loads((out_a / "metrics.json").read_text())
        metrics_b = json.loads((out_b / "metrics.json").read_text())
        assert metrics_a == metrics_b

    def test_soft_pooling_runs(self, tmp_path, runner, small_inputs):
        kernels, synth = small_inputs
        out_dir = tmp_path / "soft"
        result = runner.invoke(main, [
            "pipeline", "--synth-config", str(synth), "--kernels", str(kernels),
            "--pooling", "soft", "--lambda", "100", "--out-dir", str(out_dir)])
        assert result.exit_code == 0, result.output
        assert (out_dir / "metrics.json").exists()

    def test_workers_env_var_fallback(self, tmp_path, runner, small_inputs):
        kernels, synth = small_inputs
        out_dir = tmp_path / "env_workers"
        result = runner.invoke(main, [
            "pipeline", "--synth-config", str(synth), "--kernels", str(kernels),
            "--seed", "1", "--out-dir", str(out_dir)],
            env={"ROCKET_FORGE_WORKERS": "1"})
        assert result.exit_code == 0, result.output
        manifest = json.loads((out_dir / "manifest.json").read_text())
        assert manifest["config"]["workers"] == 1


class TestLambdaSweep:
    def test_default_sweep_has_ten_rows(self, tmp_path, runner):
        runner_result = runner.invoke(main, [
            "gen-kernels", "--num-kernels", "40", "--input-length", "300",
            "--channels", "3", "--out", str(tmp_path / "k.json")])
        assert runner_result.exit_code == 0
        synth = tmp_path / "synth.json"
        synth.write_text(json.dumps({
            "seed": 2, "n_samples": 24, "n_channels": 3, "n_timesteps": 300,
            "label_cutoff": 80.0}))
        out_dir = tmp_path / "sweep"
        result = runner.invoke(main, [
            "lambda-sweep", "--synth-config", str(synth),
            "--kernels", str(tmp_path / "k.json"), "--out-dir", str(out_dir)])
        assert result.exit_code == 0, result.output
        with open(out_dir / "lambda_sweep.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 10
        assert [r["lambda"] for r in rows[:-1]] == \
            ["1", "2", "3", "4", "8", "16", "64", "256", "1000"]
        assert rows[-1]["lambda"] == "hard"
        assert all(float(r["test_mse"]) > 0 for r in rows)
        assert (out_dir / "manifest.json").exists()


class TestBenchCommand:
    def test_three_row_report(self, tmp_path, runner):
        out_dir = tmp_path / "bench"
        result = runner.invoke(main, [
            "bench", "--batch-sizes", "1,8,4", "--repeats", "1", "--warmup", "0",
            "--num-kernels", "16", "--channels", "2", "--timesteps", "64",
            "--out-dir", str(out_dir)])
        assert result.exit_code == 0, result.output
        with open(out_dir / "report.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert sorted({int(r["batch_size"]) for r in rows}) == [1, 4, 8]
        assert (out_dir / "report.json").exists()
        assert (out_dir / "manifest.json").exists()

    def test_bad_flag_value_is_usage_error(self, tmp_path, runner):
        result = runner.invoke(main, [
            "bench", "--batch-sizes", "1,z", "--out-dir", str(tmp_path / "x")])
        assert result.exit_code == 2

    def test_same_seed_same_row_structure(self, tmp_path, runner):
        structures = []
        for name in ("r1", "r2"):
            out_dir = tmp_path / name
            result = runner.invoke(main, [
                "bench", "--batch-sizes", "2,1", "--repeats", "2", "--warmup", "0",
                "--num-kernels", "16", "--channels", "2", "--timesteps", "64",
                "--seed", "3", "--out-dir", str(out_dir)])
            assert result.exit_code == 0, result.output
            with open(out_dir / "report.csv") as fh:
                structures.append([(r["batch_size"], r["repeat"])
                                   for r in csv.DictReader(fh)])
        assert structures[0] == structures[1]

    def test_sizing_refusal_exits_1(self, tmp_path, runner):
        result = runner.invoke(main, [
            "bench", "--batch-sizes", "1024", "--num-kernels", "16",
            "--channels", "4", "--timesteps", "50000",
            "--memory-budget-gb", "0.05", "--out-dir", str(tmp_path / "x")])
        assert result.exit_code == 1
        assert "1024" in result.output


class TestStratifiedSplit:
    def test_sizes_and_disjointness(self):
        labels = np.random.default_rng(0).uniform(0, 2, 100)
        train, test = stratified_split(labels, 0.9, seed=0)
        assert len(test) == 10
        assert len(train) == 90
        assert set(train) & set(test) == set()
        assert sorted(set(train) | set(test)) == list(range(100))

    def test_covers_label_range(self):
        labels = np.linspace(0, 1, 50)
        _, test = stratified_split(labels, 0.8, seed=1)
        # one test example per contiguous rank stratum
        assert len(test) == 10
        assert labels[test].min() < 0.15
        assert labels[test].max() > 0.85

    def test_deterministic(self):
        labels = np.random.default_rng(2).uniform(0, 1, 40)
        a = stratified_split(labels, 0.9, seed=7)
        b = stratified_split(labels, 0.9, seed=7)
        np.testing.assert_array_equal(a[0], b[0])
        np.testing.assert_array_equal(a[1], b[1])

    def test_invalid_fraction(self):
        with pytest.raises(ValueError, match="fraction"):
            stratified_split(np.arange(10.0), 1.0, seed=0)
