import csv
import json
import os

import pytest

from executors.execute_experiment import EXIT_CONFIG, EXIT_OK, EXIT_RUNTIME, main
from executors.run_config import ConfigError, RunConfig
from helpers.artifacts import ArtifactHelper

TIMING_COLUMNS = {"time_saving_pct", "wall_clock_s"}


def _payload(output_dir):
    return {
        "seed": 5,
        "output_dir": str(output_dir),
        "synthetic": {"n_train": 120, "n_dev": 60, "n_test": 20, "min_length": 6, "max_length": 10},
        "model": {"n_layers": 3, "hidden_size": 8, "n_heads": 2, "ffn_size": 16, "max_seq_len": 12},
        "training": {"epochs": 2, "stage_two_epochs": 1, "batch_size": 16, "learning_rate": 0.003},
    }


@pytest.fixture
def config_path(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps(_payload(tmp_path / "out")), encoding="utf-8")
    return str(path)


def _run(*argv):
    return main(list(argv) + ["--no-progress"])


def _csv_without_timing(path):
    with open(path, newline="", encoding="utf-8") as f:
        rows = list(csv.DictReader(f))
    return [{k: v for k, v in row.items() if k not in TIMING_COLUMNS} for row in rows]


class TestRunConfig:
    def test_seed_propagates_to_training(self, tmp_path):
        payload = _payload(tmp_path)
        payload["training"]["seed"] = 99
        assert RunConfig.from_payload(payload).training.seed == 5

    def test_exactly_one_source(self, tmp_path):
        payload = _payload(tmp_path)
        del payload["synthetic"]
        with pytest.raises(ConfigError, match="exactly one"):
            RunConfig.from_payload(payload)

    def test_unknown_field_reports_location(self, tmp_path):
        payload = _payload(tmp_path)
        payload["model"]["depth"] = 3
        with pytest.raises(ConfigError, match="model.depth"):
            RunConfig.from_payload(payload)

    def test_tsv_paths_must_exist(self, tmp_path):
        payload = _payload(tmp_path)
        del payload["synthetic"]
        payload["tsv"] = {"train_path": str(tmp_path / "no.tsv"), "dev_path": str(tmp_path / "no.tsv"),
                          "n_classes": 2}
        with pytest.raises(ConfigError, match="does not exist"):
            RunConfig.from_payload(payload)

    def test_overrides(self, tmp_path):
        config = RunConfig.from_payload(_payload(tmp_path)).with_overrides(seed=8, grid=[0.0, 0.2])
        assert config.seed == config.training.seed == 8
        assert config.sweep.grid == [0.0, 0.2]

    def test_invalid_grid(self, tmp_path):
        payload = _payload(tmp_path)
        payload["sweep"] = {"grid": [0.1, 0.2]}
        with pytest.raises(ConfigError):
            RunConfig.from_payload(payload)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            RunConfig.load(str(tmp_path / "absent.json"))


class TestExitCodes:
    def test_invalid_config_is_a_config_error(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"seed": 1}), encoding="utf-8")
        assert _run("train", "--config", str(path)) == EXIT_CONFIG

    def test_malformed_json(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{not json", encoding="utf-8")
        assert _run("sweep", "--config", str(path)) == EXIT_CONFIG

    def test_bad_threshold_grid(self, config_path):
        assert _run("sweep", "--config", config_path, "--threshold-grid", "0,x") == EXIT_CONFIG

    def test_negative_eval_threshold(self, config_path):
        assert _run("eval", "--config", config_path, "--threshold", "-1") == EXIT_CONFIG

    def test_missing_checkpoint_is_a_runtime_error(self, config_path):
        assert _run("sweep", "--config", config_path) == EXIT_RUNTIME

    def test_stage_two_needs_stage_one(self, config_path):
        assert _run("train", "--config", config_path, "--stage", "2") == EXIT_RUNTIME

    def test_unknown_split(self, config_path, tmp_path):
        assert _run("train", "--config", config_path) == EXIT_OK
        assert _run("eval", "--config", config_path, "--threshold", "0.1", "--split", "holdout") == EXIT_RUNTIME

    def test_unknown_analyze_mode(self, config_path):
        with pytest.raises(SystemExit) as excinfo:
            _run("analyze", "histogram", "--config", config_path)
        assert excinfo.value.code == 2


class TestCommands:
    def test_full_pipeline(self, config_path, tmp_path):
        out = tmp_path / "out"
        assert _run("train", "--config", config_path) == EXIT_OK
        assert (out / "stage1.ckpt").is_file() and (out / "stage2.ckpt").is_file()
        report = json.loads((out / "train_report.json").read_text(encoding="utf-8"))
        assert report["seed"] == 5
        assert report["stage_two_sha256"] == ArtifactHelper.compute_file_hash(str(out / "stage2.ckpt"))

        assert _run("sweep", "--config", config_path) == EXIT_OK
        with open(out / "sweep.csv", newline="", encoding="utf-8") as f:
            rows = list(csv.reader(f))
        assert rows[0] == ["S", "accuracy", "f1", "expected_saving", "layer_saving", "time_saving_pct",
                           "wall_clock_s"]
        assert len(rows) == 22
        assert float(rows[1][0]) == 0.0
        assert float(rows[1][3]) == 0.0
        exits = (out / "exits.jsonl").read_text(encoding="utf-8").splitlines()
        assert len(exits) == 21 * 60
        summary = json.loads((out / "sweep.json").read_text(encoding="utf-8"))
        assert {"points", "operating_points", "turning_point"} <= set(summary)

        for mode, name in (("layers", "layers.csv"), ("exits", "exit_histogram.csv"),
                           ("expected-vs-measured", "expected_vs_measured.csv")):
            assert _run("analyze", mode, "--config", config_path) == EXIT_OK
            assert (out / name).is_file()
        layers = _csv_without_timing(str(out / "layers.csv"))
        assert [row["layer"] for row in layers] == ["1", "2", "3"]
        pairs = _csv_without_timing(str(out / "expected_vs_measured.csv"))
        assert all(row["expected_saving"] == row["layer_saving"] for row in pairs)

        assert _run("eval", "--config", config_path, "--threshold", "0.3", "--split", "test") == EXIT_OK
        evaluation = json.loads((out / "eval.json").read_text(encoding="utf-8"))
        assert evaluation["split"] == "test"
        assert sum(evaluation["exit_histogram"]["counts"]) == 20

    def test_custom_threshold_grid(self, config_path, tmp_path):
        assert _run("train", "--config", config_path) == EXIT_OK
        assert _run("sweep", "--config", config_path, "--threshold-grid", "0.5,0.1") == EXIT_OK
        rows = _csv_without_timing(str(tmp_path / "out" / "sweep.csv"))
        assert [float(row["S"]) for row in rows] == [0.0, 0.1, 0.5]

    def test_staged_training_matches_full_run(self, config_path, tmp_path):
        staged, full = tmp_path / "staged", tmp_path / "full"
        assert _run("train", "--config", config_path, "--out", str(staged), "--stage", "1") == EXIT_OK
        assert (staged / "stage1.ckpt").is_file() and not (staged / "stage2.ckpt").exists()
        assert _run("train", "--config", config_path, "--out", str(staged), "--stage", "2") == EXIT_OK
        assert _run("train", "--config", config_path, "--out", str(full)) == EXIT_OK
        for name in ("stage1.ckpt", "stage2.ckpt"):
            assert (ArtifactHelper.compute_file_hash(str(staged / name))
                    == ArtifactHelper.compute_file_hash(str(full / name)))

    def test_reruns_are_byte_identical(self, config_path, tmp_path):
        runs = [tmp_path / "first", tmp_path / "second"]
        for out in runs:
            assert _run("train", "--config", config_path, "--out", str(out)) == EXIT_OK
            assert _run("sweep", "--config", config_path, "--out", str(out)) == EXIT_OK
            assert _run("analyze", "layers", "--config", config_path, "--out", str(out)) == EXIT_OK
            assert _run("analyze", "exits", "--config", config_path, "--out", str(out)) == EXIT_OK

        for name in ("stage1.ckpt", "stage2.ckpt", "exits.jsonl", "layers.csv", "exit_histogram.csv"):
            hashes = {ArtifactHelper.compute_file_hash(os.path.join(str(out), name)) for out in runs}
            assert len(hashes) == 1, name
        assert (_csv_without_timing(os.path.join(str(runs[0]), "sweep.csv"))
                == _csv_without_timing(os.path.join(str(runs[1]), "sweep.csv")))

    def test_different_seed_different_checkpoint(self, config_path, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        assert _run("train", "--config", config_path, "--out", str(a), "--stage", "1") == EXIT_OK
        assert _run("train", "--config", config_path, "--out", str(b), "--stage", "1", "--seed", "6") == EXIT_OK
        assert (ArtifactHelper.compute_file_hash(str(a / "stage1.ckpt"))
                != ArtifactHelper.compute_file_hash(str(b / "stage1.ckpt")))

    def test_retraining_stage_one_discards_stage_two(self, config_path, tmp_path):
        out = tmp_path / "retrain"
        assert _run("train", "--config", config_path, "--out", str(out)) == EXIT_OK
        assert (out / "stage2.ckpt").is_file()
        assert _run("train", "--config", config_path, "--out", str(out), "--stage", "1", "--seed", "6") == EXIT_OK
        assert not (out / "stage2.ckpt").exists()
        report = json.loads((out / "train_report.json").read_text(encoding="utf-8"))
        assert "stage_one" in report
        assert "stage_two" not in report and "stage_two_sha256" not in report
        assert _run("sweep", "--config", config_path, "--out", str(out)) == EXIT_RUNTIME
