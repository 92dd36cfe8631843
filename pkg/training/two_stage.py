import time
from typing import Callable, Dict, List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from tqdm import tqdm

from autograd import Adam, Tape, Tensor, clip_grad_norm, cross_entropy, no_grad
from config import (
    ADAM_BETA1,
    ADAM_BETA2,
    ADAM_EPSILON,
    DEFAULT_BATCH_SIZE,
    DEFAULT_EPOCHS,
    DEFAULT_LEARNING_RATE,
    DEFAULT_SEED,
)
from evaluation.quality import quality
from helpers.logger_config import LoggerManager
from modeling.early_exit_model import EarlyExitModel
from preprocessing.batching import EncodedSplit, iterate_batches

STAGE_ONE = "stage_one"
STAGE_TWO = "stage_two"


class DivergenceError(RuntimeError):
    """Raised when a training loss stops being finite."""


class TrainConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    epochs: int = Field(default=DEFAULT_EPOCHS, ge=1, description="Epochs of stage one (and stage two unless overridden)")
    stage_two_epochs: Optional[int] = Field(default=None, ge=1)
    batch_size: int = Field(default=DEFAULT_BATCH_SIZE, ge=1)
    learning_rate: float = Field(default=DEFAULT_LEARNING_RATE, gt=0.0)
    seed: int = DEFAULT_SEED
    beta1: float = Field(default=ADAM_BETA1, ge=0.0, lt=1.0)
    beta2: float = Field(default=ADAM_BETA2, ge=0.0, lt=1.0)
    epsilon: float = Field(default=ADAM_EPSILON, gt=0.0)
    grad_clip_norm: Optional[float] = Field(default=None, gt=0.0)
    shuffle: bool = True

    def epochs_for(self, stage: str) -> int:
        if stage == STAGE_TWO and self.stage_two_epochs is not None:
            return self.stage_two_epochs
        return self.epochs


class TrainReport(BaseModel):
    stage: Literal["stage_one", "stage_two"]
    ramps_trained: List[int]
    epoch_losses: List[float]
    steps: int
    wall_clock_s: float
    metric: str = "accuracy"
    dev_quality: Optional[List[float]] = Field(default=None, description="Quality of ramps 1..n on dev after the stage")
    parameter_updates: Dict[str, int] = Field(default_factory=dict)


def ramp_loss(model: EarlyExitModel, batch: EncodedSplit, ramp: int) -> Tensor:
    """Mean cross-entropy of ramp `ramp` (1-based) over a batch."""
    if len(batch) == 0:
        raise ValueError("ramp_loss needs a non-empty batch")
    if not 1 <= ramp <= model.n_layers:
        raise ValueError(f"ramp must be in [1, {model.n_layers}], got {ramp}")
    logits = model.forward_prefix(batch.token_ids, batch.mask, depth=ramp, segment_ids=batch.segment_ids)
    return cross_entropy(logits, batch.labels)


def intermediate_ramps_loss(model: EarlyExitModel, batch: EncodedSplit) -> Tensor:
    """Unweighted sum of the losses of ramps 1..n-1, with the backbone run as a constant."""
    if len(batch) == 0:
        raise ValueError("intermediate_ramps_loss needs a non-empty batch")
    depth = model.n_layers - 1
    with no_grad():
        pooled = model.pooled_states(batch.token_ids, batch.mask, batch.segment_ids, depth=depth)
    total = None
    for index, state in enumerate(pooled):
        loss = cross_entropy(model.ramps[index](state), batch.labels)
        total = loss if total is None else total + loss
    return total


def ramp_dev_quality(model: EarlyExitModel, dev_set: EncodedSplit, metric: str = "accuracy") -> List[float]:
    """Quality of every ramp on a split, batched (used for reports, not for timing)."""
    with no_grad():
        logits = model.forward_all(dev_set.token_ids, dev_set.mask, dev_set.segment_ids)
    return [quality(np.argmax(z.data, axis=1), dev_set.labels, metric) for z in logits]


class TwoStageTrainer:
    """
    Stage one trains the backbone on the last ramp's loss. Stage two freezes it
    and trains ramps 1..n-1 on the sum of their losses. Freezing is structural:
    each stage's optimizer only holds the parameters it may change.
    """

    def __init__(self, model: EarlyExitModel, config: TrainConfig, logger=None, progress: bool = True):
        self._model = model
        self._config = config
        self.logger = logger or LoggerManager().get_logger()
        self.progress = progress

    @property
    def model(self) -> EarlyExitModel:
        return self._model

    @property
    def config(self) -> TrainConfig:
        return self._config

    @config.setter
    def config(self, value):
        if not isinstance(value, TrainConfig):
            raise ValueError(f"config must be a TrainConfig, got {type(value)}")
        self._config = value

    def _run_stage(self, stage: str, trainable: Dict[str, Tensor], loss_fn: Callable[[EncodedSplit], Tensor],
                   train_set: EncodedSplit, stage_seed: int) -> Tuple[List[float], int, Dict[str, int]]:
        config = self._config
        optimizer = Adam(trainable, lr=config.learning_rate, beta1=config.beta1, beta2=config.beta2,
                         epsilon=config.epsilon)
        self._model.train(True)
        self._model.dropout_rng = np.random.default_rng([config.seed, stage_seed])
        epochs = config.epochs_for(stage)
        epoch_losses, steps = [], 0
        try:
            for epoch in tqdm(range(epochs), desc=stage.replace("_", " ").title(), unit="epoch",
                              disable=not self.progress):
                losses = []
                batches = iterate_batches(train_set, config.batch_size, seed=config.seed, shuffle=config.shuffle,
                                          epoch=stage_seed * 100_000 + epoch)
                for step, batch in enumerate(batches):
                    optimizer.zero_grad()
                    with Tape() as tape:
                        loss = loss_fn(batch)
                        value = loss.item()
                        if not np.isfinite(value):
                            raise DivergenceError(
                                f"{stage}: loss became {value} at epoch {epoch + 1}, step {step + 1}"
                            )
                        tape.backward(loss)
                    if config.grad_clip_norm is not None:
                        clip_grad_norm(optimizer.parameters, config.grad_clip_norm)
                    optimizer.step()
                    losses.append(value)
                    steps += 1
                epoch_losses.append(float(np.mean(losses)))
                self.logger.info(f"{stage} epoch {epoch + 1}/{epochs}: mean loss {epoch_losses[-1]:.6f}")
        finally:
            self._model.train(False)
            self._model.dropout_rng = None
            optimizer.zero_grad()

        updates = {name: 0 for name, _ in self._model.named_parameters()}
        updates.update(optimizer.update_counts)
        return epoch_losses, steps, updates

    def stage_one(self, train_set: EncodedSplit, dev_set: Optional[EncodedSplit] = None,
                  metric: str = "accuracy") -> TrainReport:
        """Update embeddings, all layers and the last ramp with the last ramp's loss."""
        n = self._model.n_layers
        self.logger.info(f"Stage one: training backbone on ramp {n} over {len(train_set)} sample(s)")
        start = time.perf_counter()
        losses, steps, updates = self._run_stage(
            STAGE_ONE, self._model.backbone_parameters(), lambda batch: ramp_loss(self._model, batch, n),
            train_set, stage_seed=1,
        )
        elapsed = time.perf_counter() - start
        dev_quality = ramp_dev_quality(self._model, dev_set, metric) if dev_set is not None else None
        if dev_quality:
            self.logger.info(f"Stage one done in {elapsed:.1f}s; ramp {n} dev {metric} {dev_quality[-1]:.4f}")
        return TrainReport(stage=STAGE_ONE, ramps_trained=[n], epoch_losses=losses, steps=steps,
                           wall_clock_s=elapsed, metric=metric, dev_quality=dev_quality,
                           parameter_updates=updates)

    def stage_two(self, train_set: EncodedSplit, dev_set: Optional[EncodedSplit] = None,
                  metric: str = "accuracy") -> TrainReport:
        """Freeze the backbone, then update ramps 1..n-1 with the sum of their losses."""
        n = self._model.n_layers
        trainable = self._model.intermediate_ramp_parameters()
        start = time.perf_counter()
        if not trainable:
            self.logger.warning("Stage two skipped: a single-layer model has no intermediate ramps")
            losses, steps = [], 0
            updates = {name: 0 for name, _ in self._model.named_parameters()}
        else:
            self.logger.info(f"Stage two: training ramps 1..{n - 1} over {len(train_set)} sample(s)")
            losses, steps, updates = self._run_stage(
                STAGE_TWO, trainable, lambda batch: intermediate_ramps_loss(self._model, batch),
                train_set, stage_seed=2,
            )
        elapsed = time.perf_counter() - start
        dev_quality = ramp_dev_quality(self._model, dev_set, metric) if dev_set is not None else None
        if dev_quality:
            summary = ", ".join(f"{q:.3f}" for q in dev_quality)
            self.logger.info(f"Stage two done in {elapsed:.1f}s; per-ramp dev {metric}: {summary}")
        return TrainReport(stage=STAGE_TWO, ramps_trained=list(range(1, n)), epoch_losses=losses, steps=steps,
                           wall_clock_s=elapsed, metric=metric, dev_quality=dev_quality,
                           parameter_updates=updates)


def stage_one(model: EarlyExitModel, train_set: EncodedSplit, config: TrainConfig,
              dev_set: Optional[EncodedSplit] = None, metric: str = "accuracy", progress: bool = True) -> TrainReport:
    return TwoStageTrainer(model, config, progress=progress).stage_one(train_set, dev_set, metric)


def stage_two(model: EarlyExitModel, train_set: EncodedSplit, config: TrainConfig,
              dev_set: Optional[EncodedSplit] = None, metric: str = "accuracy", progress: bool = True) -> TrainReport:
    return TwoStageTrainer(model, config, progress=progress).stage_two(train_set, dev_set, metric)


def run_two_stage(model: EarlyExitModel, train_set: EncodedSplit, config: TrainConfig,
                  dev_set: Optional[EncodedSplit] = None, metric: str = "accuracy",
                  progress: bool = True) -> Tuple[TrainReport, TrainReport]:
    trainer = TwoStageTrainer(model, config, progress=progress)
    return trainer.stage_one(train_set, dev_set, metric), trainer.stage_two(train_set, dev_set, metric)
