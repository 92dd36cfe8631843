import os
import sys
import tempfile
from types import SimpleNamespace

import numpy as np
import pytest

project_root = os.path.abspath(os.path.join(os.path.dirname(__file__), ".."))
if project_root not in sys.path:
    sys.path.insert(0, project_root)

# Keep test logs out of the working tree; must be set before config is imported.
os.environ.setdefault("EARLY_EXIT_LOG_DIR", tempfile.mkdtemp(prefix="early_exit_logs_"))

from ingestion.synthetic_task import SyntheticTaskSpec, make_synthetic_task  # noqa: E402
from modeling.early_exit_model import EarlyExitModel  # noqa: E402
from modeling.model_config import ModelConfig  # noqa: E402
from preprocessing.batching import encode_split  # noqa: E402
from preprocessing.tokenization import Vocab  # noqa: E402
from training.two_stage import TrainConfig, TwoStageTrainer  # noqa: E402

TOY_SEED = 7
TOY_MAX_LEN = 16


def tiny_model_config(**overrides) -> ModelConfig:
    fields = dict(n_layers=3, hidden_size=8, n_heads=2, ffn_size=12, vocab_size=20, max_seq_len=6, n_classes=3)
    fields.update(overrides)
    return ModelConfig(**fields)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def toy_data():
    """Small keyword task: 400 train / 200 dev samples, encoded to length 16."""
    spec = SyntheticTaskSpec(n_train=400, n_dev=200, vocab_size=30, min_length=6, max_length=12)
    dataset = make_synthetic_task(spec, seed=TOY_SEED)
    vocab = Vocab.build(dataset.split("train"))
    return SimpleNamespace(
        spec=spec,
        dataset=dataset,
        vocab=vocab,
        train=encode_split(dataset.split("train"), vocab, TOY_MAX_LEN),
        dev=encode_split(dataset.split("dev"), vocab, TOY_MAX_LEN),
    )


@pytest.fixture(scope="session")
def toy_run(toy_data):
    """
    A 4-layer model trained with both stages on the toy task, with parameter
    snapshots taken before training, after stage one and after stage two.
    """
    config = ModelConfig(n_layers=4, hidden_size=16, n_heads=2, ffn_size=32, vocab_size=len(toy_data.vocab),
                         max_seq_len=TOY_MAX_LEN, n_classes=toy_data.dataset.task.n_classes)
    model = EarlyExitModel(config, seed=TOY_SEED)
    train_config = TrainConfig(epochs=10, stage_two_epochs=4, batch_size=32, learning_rate=5e-3, seed=TOY_SEED,
                               grad_clip_norm=1.0)
    trainer = TwoStageTrainer(model, train_config, progress=False)

    initial = model.state_arrays()
    report_one = trainer.stage_one(toy_data.train, toy_data.dev)
    after_one = model.state_arrays()
    report_two = trainer.stage_two(toy_data.train, toy_data.dev)
    after_two = model.state_arrays()
    return SimpleNamespace(model=model, train_config=train_config, initial=initial, after_one=after_one,
                           after_two=after_two, report_one=report_one, report_two=report_two)
