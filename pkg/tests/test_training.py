import math

import numpy as np
import pytest
from pydantic import ValidationError

from autograd import cross_entropy, no_grad
from evaluation import accuracy
from modeling import EarlyExitModel
from tests.conftest import TOY_SEED
from training import (
    DivergenceError,
    TrainConfig,
    TwoStageTrainer,
    intermediate_ramps_loss,
    ramp_dev_quality,
    ramp_loss,
    run_two_stage,
)


def _changed(before, after):
    return {name for name in before if not np.array_equal(before[name], after[name])}


class TestTrainConfig:
    def test_stage_two_epochs_default_to_epochs(self):
        config = TrainConfig(epochs=3)
        assert config.epochs_for("stage_one") == 3
        assert config.epochs_for("stage_two") == 3
        assert TrainConfig(epochs=3, stage_two_epochs=1).epochs_for("stage_two") == 1

    def test_rejects_unknown_fields(self):
        with pytest.raises(ValidationError):
            TrainConfig(epoch=3)

    def test_trainer_config_setter_validates(self, toy_run):
        trainer = TwoStageTrainer(toy_run.model, toy_run.train_config, progress=False)
        with pytest.raises(ValueError):
            trainer.config = {"epochs": 1}


class TestFreezeContract:
    def test_stage_one_changes_only_the_backbone(self, toy_run):
        changed = _changed(toy_run.initial, toy_run.after_one)
        backbone = set(toy_run.model.backbone_parameters())
        assert changed
        assert changed <= backbone

    def test_stage_two_changes_only_intermediate_ramps(self, toy_run):
        changed = _changed(toy_run.after_one, toy_run.after_two)
        ramps = set(toy_run.model.intermediate_ramp_parameters())
        assert changed
        assert changed <= ramps

    def test_update_counts_follow_the_partitions(self, toy_run):
        model = toy_run.model
        backbone = set(model.backbone_parameters())
        one, two = toy_run.report_one, toy_run.report_two
        assert set(one.parameter_updates) == set(model.parameters_by_name())
        for name in model.parameters_by_name():
            if name in backbone:
                assert one.parameter_updates[name] == one.steps
                assert two.parameter_updates[name] == 0
            else:
                assert one.parameter_updates[name] == 0
                assert two.parameter_updates[name] == two.steps

    def test_last_ramp_quality_survives_stage_two(self, toy_run):
        assert toy_run.report_one.dev_quality[-1] == toy_run.report_two.dev_quality[-1]

    def test_last_ramp_predictions_survive_stage_two(self, toy_run, toy_data):
        model = EarlyExitModel(toy_run.model.config)
        for name, tensor in model.parameters_by_name().items():
            tensor.data[...] = toy_run.after_one[name]
        before = ramp_dev_quality(model, toy_data.dev)[-1]
        after = ramp_dev_quality(toy_run.model, toy_data.dev)[-1]
        assert before == after


class TestReports:
    def test_stage_reports(self, toy_run, toy_data):
        one, two = toy_run.report_one, toy_run.report_two
        batches_per_epoch = -(-len(toy_data.train) // toy_run.train_config.batch_size)
        assert one.stage == "stage_one" and two.stage == "stage_two"
        assert one.ramps_trained == [4]
        assert two.ramps_trained == [1, 2, 3]
        config = toy_run.train_config
        assert len(one.epoch_losses) == config.epochs
        assert len(two.epoch_losses) == config.stage_two_epochs
        assert one.steps == config.epochs * batches_per_epoch
        assert two.steps == config.stage_two_epochs * batches_per_epoch
        assert len(two.dev_quality) == 4

    def test_training_reduces_the_loss(self, toy_run):
        assert toy_run.report_one.epoch_losses[-1] < toy_run.report_one.epoch_losses[0]
        assert toy_run.report_two.epoch_losses[-1] < toy_run.report_two.epoch_losses[0]

    def test_last_ramp_learns_the_task(self, toy_run, toy_data):
        # every easy sample is decided by one keyword, so a trained model clears chance by a wide margin
        assert toy_run.report_two.dev_quality[-1] > 0.6

    def test_model_left_in_eval_mode(self, toy_run):
        assert not toy_run.model.training
        assert toy_run.model.dropout_rng is None


class TestLosses:
    def test_ramp_loss_bounds(self, toy_run, toy_data):
        batch = toy_data.train.take(range(8))
        with pytest.raises(ValueError):
            ramp_loss(toy_run.model, batch, 0)
        with pytest.raises(ValueError):
            ramp_loss(toy_run.model, toy_data.train.take([]), 1)

    def test_intermediate_loss_is_sum_of_ramp_losses(self, toy_run, toy_data):
        batch = toy_data.train.take(range(8))
        total = intermediate_ramps_loss(toy_run.model, batch).item()
        parts = sum(ramp_loss(toy_run.model, batch, ramp).item() for ramp in (1, 2, 3))
        assert total == pytest.approx(parts, rel=1e-12)

    def test_ramp_loss_is_cross_entropy_of_forward_all(self, toy_run, toy_data):
        batch = toy_data.train.take(range(16))
        model = toy_run.model
        with no_grad():
            every_ramp = model.forward_all(batch.token_ids, batch.mask, batch.segment_ids)
            for ramp in range(1, model.n_layers + 1):
                expected = cross_entropy(every_ramp[ramp - 1], batch.labels).item()
                assert ramp_loss(model, batch, ramp).item() == pytest.approx(expected, rel=1e-12)

    def test_untrained_loss_is_near_log_k(self, toy_run, toy_data):
        model = EarlyExitModel(toy_run.model.config, seed=TOY_SEED + 1)
        batch = toy_data.train.take(range(256))
        log_k = math.log(model.config.n_classes)
        with no_grad():
            for ramp in range(1, model.n_layers + 1):
                assert ramp_loss(model, batch, ramp).item() == pytest.approx(log_k, rel=0.1)


class TestDeterminism:
    def test_same_seed_same_weights(self, toy_data, toy_run):
        config = TrainConfig(epochs=1, batch_size=64, seed=TOY_SEED)
        train = toy_data.train.take(range(128))
        results = []
        for _ in range(2):
            model = EarlyExitModel(toy_run.model.config, seed=TOY_SEED)
            run_two_stage(model, train, config, progress=False)
            results.append(model.state_arrays())
        assert all(np.array_equal(results[0][name], results[1][name]) for name in results[0])

    def test_dropout_runs_are_reproducible(self, toy_data, toy_run):
        config = toy_run.model.config.model_copy(update={"dropout_rate": 0.1})
        train = toy_data.train.take(range(64))
        results = []
        for _ in range(2):
            model = EarlyExitModel(config, seed=TOY_SEED)
            run_two_stage(model, train, TrainConfig(epochs=1, batch_size=32, seed=1), progress=False)
            results.append(model.state_arrays())
        assert all(np.array_equal(results[0][name], results[1][name]) for name in results[0])


class TestFailures:
    def test_non_finite_loss_raises(self, toy_data, toy_run):
        model = EarlyExitModel(toy_run.model.config, seed=0)
        model.ramps[-1].classifier.weight.data[...] = np.nan
        trainer = TwoStageTrainer(model, TrainConfig(epochs=1), progress=False)
        with pytest.raises(DivergenceError):
            trainer.stage_one(toy_data.train.take(range(16)))
        assert not model.training

    def test_single_layer_model_skips_stage_two(self, toy_data, toy_run):
        config = toy_run.model.config.model_copy(update={"n_layers": 1})
        model = EarlyExitModel(config, seed=0)
        before = model.state_arrays()
        report = TwoStageTrainer(model, TrainConfig(epochs=1), progress=False).stage_two(toy_data.train.take(range(8)))
        assert report.steps == 0
        assert report.ramps_trained == []
        assert not _changed(before, model.state_arrays())


def test_dev_quality_matches_forced_predictions(toy_run, toy_data):
    # batched and single-sample passes may differ in the last bit, so allow a near-tie flip or two
    from inference import infer_forced_exit

    qualities = ramp_dev_quality(toy_run.model, toy_data.dev)
    for layer in (1, 4):
        predictions = infer_forced_exit(toy_run.model, toy_data.dev, layer)
        assert qualities[layer - 1] == pytest.approx(accuracy(predictions, toy_data.dev.labels), abs=0.011)
