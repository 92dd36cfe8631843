import json
import math
import threading
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest
from pydantic import ValidationError

from autograd import no_grad, softmax
from evaluation import default_threshold_grid
from inference import (
    ExitPolicy,
    ExitRecord,
    entropy,
    infer_batch,
    infer_early_exit,
    infer_forced_exit,
    ramp_predictions,
    write_exit_records_csv,
    write_exit_records_jsonl,
)


def _ramp_entropies(model, sample):
    """Entropy of every ramp from one full pass, for the scan oracle."""
    with no_grad():
        logits = model.forward_all(sample.token_ids, sample.mask, sample.segment_ids)
    return [entropy(softmax(z, axis=-1).data[0]) for z in logits]


def _oracle_exit(entropies, threshold):
    for layer, value in enumerate(entropies, start=1):
        if value < threshold:
            return layer
    return len(entropies)


@pytest.fixture(scope="module")
def grid(toy_data):
    return default_threshold_grid(toy_data.dataset.task.n_classes)


@pytest.fixture(scope="module")
def exits_by_threshold(toy_run, toy_data, grid):
    """Exit layer of every dev sample at every grid threshold: {S: [layer, ...]}."""
    return {
        threshold: infer_batch(toy_run.model, toy_data.dev, ExitPolicy(entropy_threshold=threshold)).exit_layers
        for threshold in grid
    }


class TestEntropy:
    def test_known_value(self):
        assert entropy([0.7, 0.2, 0.1]) == pytest.approx(0.801819, abs=1e-6)

    def test_one_hot_is_zero(self):
        assert entropy([1.0, 0.0, 0.0]) == 0.0

    def test_uniform_is_capped_at_log_k(self):
        value = entropy([0.25] * 4)
        assert value == pytest.approx(math.log(4), rel=1e-12)
        assert value <= math.log(4)

    @pytest.mark.parametrize("bad", [[0.5, 0.6], [1.2, -0.2], [], [float("nan"), 1.0], [[0.5, 0.5]]])
    def test_rejects_non_distributions(self, bad):
        with pytest.raises(ValueError):
            entropy(bad)


class TestPolicyAndRecord:
    @pytest.mark.parametrize("threshold", [-0.1, float("nan"), float("inf")])
    def test_policy_rejects_bad_thresholds(self, threshold):
        with pytest.raises(ValidationError):
            ExitPolicy(entropy_threshold=threshold)

    def test_record_prediction_must_be_argmax(self):
        with pytest.raises(ValidationError):
            ExitRecord(sample_id=0, threshold=0.1, exit_layer=1, entropy=0.5, predicted_class=0,
                       probabilities=[0.2, 0.8], layers_executed=1)

    def test_record_layers_must_match_exit(self):
        with pytest.raises(ValidationError):
            ExitRecord(sample_id=0, threshold=0.1, exit_layer=2, entropy=0.5, predicted_class=1,
                       probabilities=[0.2, 0.8], layers_executed=3)


class TestEarlyExit:
    def test_matches_scan_oracle(self, toy_run, toy_data, grid, exits_by_threshold):
        for sample in toy_data.dev.samples():
            entropies = _ramp_entropies(toy_run.model, sample)
            for threshold in grid:
                assert exits_by_threshold[threshold][sample.sample_id] == _oracle_exit(entropies, threshold), (
                    f"sample {sample.sample_id}, S={threshold}"
                )

    def test_zero_threshold_never_exits_early(self, exits_by_threshold, toy_run):
        assert set(exits_by_threshold[0.0]) == {toy_run.model.n_layers}

    def test_threshold_above_log_k_exits_at_first_layer(self, toy_run, toy_data):
        policy = ExitPolicy(entropy_threshold=math.log(toy_data.dataset.task.n_classes) + 1e-9)
        assert set(infer_batch(toy_run.model, toy_data.dev, policy).exit_layers) == {1}

    def test_exit_layer_never_increases_with_threshold(self, grid, exits_by_threshold, toy_data):
        for position in range(len(toy_data.dev)):
            layers = [exits_by_threshold[threshold][position] for threshold in grid]
            assert all(b <= a for a, b in zip(layers, layers[1:])), f"sample {position}: {layers}"

    def test_record_fields(self, toy_run, toy_data):
        sample = toy_data.dev.sample(3)
        record = infer_early_exit(toy_run.model, sample, ExitPolicy(entropy_threshold=0.3))
        assert record.sample_id == 3
        assert record.label == sample.label
        assert record.layers_executed == record.exit_layer
        assert sum(record.probabilities) == pytest.approx(1.0)
        assert record.entropy == entropy(record.probabilities)
        assert record.exit_layer == toy_run.model.n_layers or record.entropy < 0.3

    def test_exit_prediction_equals_forced_prediction(self, toy_run, toy_data):
        result = infer_batch(toy_run.model, toy_data.dev, ExitPolicy(entropy_threshold=0.2))
        forced = ramp_predictions(toy_run.model, toy_data.dev)
        for record in result.records:
            assert record.predicted_class == forced[record.exit_layer - 1, record.sample_id]

    def test_forced_exit_matches_ramp_predictions(self, toy_run, toy_data):
        split = toy_data.dev.take(range(40))
        every = ramp_predictions(toy_run.model, split)
        for layer in range(1, toy_run.model.n_layers + 1):
            assert np.array_equal(infer_forced_exit(toy_run.model, split, layer), every[layer - 1])

    def test_forced_exit_layer_bounds(self, toy_run, toy_data):
        with pytest.raises(ValueError):
            infer_forced_exit(toy_run.model, toy_data.dev, 0)


class TestInferBatch:
    def test_counts_every_layer_it_runs(self, toy_run, toy_data):
        result = infer_batch(toy_run.model, toy_data.dev, ExitPolicy(entropy_threshold=0.3))
        assert toy_run.model.layer_executions == result.layers_executed == sum(result.exit_layers)
        assert [r.sample_id for r in result.records] == list(range(len(toy_data.dev)))
        assert result.wall_clock_s > 0.0
        assert all(r.threshold == 0.3 for r in result.records)

    def test_concurrent_calls_keep_separate_counts(self, toy_run, toy_data):
        model, split = toy_run.model, toy_data.dev.take(range(40))
        thresholds = [0.05, 0.4, 0.05, 0.4]
        expected = {s: infer_batch(model, split, ExitPolicy(entropy_threshold=s)).records for s in set(thresholds)}
        start = threading.Barrier(len(thresholds))

        def run(threshold):
            start.wait()
            result = infer_batch(model, split, ExitPolicy(entropy_threshold=threshold))
            return result, model.layer_executions

        with ThreadPoolExecutor(max_workers=len(thresholds)) as pool:
            outcomes = list(pool.map(run, thresholds))
        for threshold, (result, counted) in zip(thresholds, outcomes):
            assert counted == result.layers_executed
            assert result.records == expected[threshold]

    def test_predictions_array(self, toy_run, toy_data):
        result = infer_batch(toy_run.model, toy_data.dev.take(range(10)), ExitPolicy())
        assert result.predictions.dtype == np.int64
        assert len(result) == 10


class TestExporters:
    def test_jsonl_has_one_record_per_line(self, toy_run, toy_data, tmp_path):
        result = infer_batch(toy_run.model, toy_data.dev.take(range(5)), ExitPolicy(entropy_threshold=0.1))
        path = write_exit_records_jsonl(result.records, str(tmp_path / "exits.jsonl"))
        lines = open(path, encoding="utf-8").read().splitlines()
        assert len(lines) == 5
        assert ExitRecord.model_validate(json.loads(lines[0])) == result.records[0]

    def test_csv_header(self, toy_run, toy_data, tmp_path):
        result = infer_batch(toy_run.model, toy_data.dev.take(range(5)), ExitPolicy())
        path = write_exit_records_csv(result.records, str(tmp_path / "exits.csv"))
        lines = open(path, encoding="utf-8").read().splitlines()
        assert lines[0] == "sample_id,exit_layer,entropy,prediction,label"
        assert len(lines) == 6
