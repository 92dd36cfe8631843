import math
import time
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from tqdm import tqdm

from autograd import no_grad, softmax
from helpers.logger_config import LoggerManager
from modeling.early_exit_model import EarlyExitModel
from preprocessing.batching import EncodedSample, EncodedSplit

logger = LoggerManager().get_logger()

DISTRIBUTION_TOLERANCE = 1e-9


class ExitPolicy(BaseModel):
    """
    Exit at the first ramp whose output entropy (nats) is strictly below
    entropy_threshold. A threshold of 0 never exits early.
    """
    model_config = ConfigDict(frozen=True)

    entropy_threshold: float = Field(default=0.0, ge=0.0, allow_inf_nan=False)


class ExitRecord(BaseModel):
    model_config = ConfigDict(frozen=True)

    sample_id: int
    threshold: float
    exit_layer: int = Field(ge=1)
    entropy: float = Field(ge=0.0)
    predicted_class: int = Field(ge=0)
    probabilities: List[float]
    layers_executed: int = Field(ge=1)
    label: Optional[int] = None

    @model_validator(mode="after")
    def _consistent(self):
        if self.layers_executed != self.exit_layer:
            raise ValueError(f"layers_executed {self.layers_executed} differs from exit_layer {self.exit_layer}")
        if self.predicted_class != int(np.argmax(self.probabilities)):
            raise ValueError("predicted_class must be the argmax of probabilities")
        return self

    def to_row(self) -> list:
        return [self.sample_id, self.exit_layer, self.entropy, self.predicted_class, self.label]


@dataclass
class InferenceResult:
    """Records of one pass over a split in dataset order, plus timing."""
    threshold: float
    records: List[ExitRecord] = field(default_factory=list)
    wall_clock_s: float = 0.0

    def __len__(self) -> int:
        return len(self.records)

    @property
    def layers_executed(self) -> int:
        return sum(record.layers_executed for record in self.records)

    @property
    def exit_layers(self) -> List[int]:
        return [record.exit_layer for record in self.records]

    @property
    def predictions(self) -> np.ndarray:
        return np.asarray([record.predicted_class for record in self.records], dtype=np.int64)


def entropy(probabilities: Sequence[float]) -> float:
    """-sum(p ln p) in nats with 0 ln 0 = 0, clamped to [0, ln K]."""
    p = np.asarray(probabilities, dtype=np.float64)
    if p.ndim != 1 or p.size == 0:
        raise ValueError(f"entropy expects a non-empty probability vector, got shape {p.shape}")
    if not np.all(np.isfinite(p)) or np.any(p < 0.0):
        raise ValueError("probabilities must be finite and non-negative")
    total = float(p.sum())
    if abs(total - 1.0) > DISTRIBUTION_TOLERANCE:
        raise ValueError(f"probabilities sum to {total!r}, not 1")
    positive = p[p > 0.0]
    value = float(-np.sum(positive * np.log(positive)))
    return min(max(value, 0.0), math.log(p.size))


def _probabilities(logits) -> np.ndarray:
    return softmax(logits, axis=-1).data[0]


def infer_early_exit(model: EarlyExitModel, sample: EncodedSample, policy: ExitPolicy) -> ExitRecord:
    """
    Run layers one at a time on a single sample and stop at the first ramp
    whose entropy is below the threshold. Falls through to the last ramp.
    """
    threshold = policy.entropy_threshold
    n = model.n_layers
    with no_grad():
        for layer, logits in model.iter_ramp_logits(sample.token_ids, sample.mask, sample.segment_ids):
            probabilities = _probabilities(logits)
            value = entropy(probabilities)
            if value < threshold or layer == n:
                break
    return ExitRecord(
        sample_id=sample.sample_id,
        threshold=threshold,
        exit_layer=layer,
        entropy=value,
        predicted_class=int(np.argmax(probabilities)),
        probabilities=probabilities.tolist(),
        layers_executed=layer,
        label=sample.label,
    )


def infer_forced_exit(model: EarlyExitModel, split: EncodedSplit, layer: int) -> np.ndarray:
    """Predictions of ramp `layer` alone for every sample, one sample at a time."""
    if not 1 <= layer <= model.n_layers:
        raise ValueError(f"layer must be in [1, {model.n_layers}], got {layer}")
    predictions = np.zeros(len(split), dtype=np.int64)
    with no_grad():
        for position, sample in enumerate(split.samples()):
            logits = model.forward_prefix(sample.token_ids, sample.mask, depth=layer, segment_ids=sample.segment_ids)
            predictions[position] = int(np.argmax(_probabilities(logits)))
    return predictions


def ramp_predictions(model: EarlyExitModel, split: EncodedSplit) -> np.ndarray:
    """[n_layers, samples] matrix of every ramp's prediction, from one single-sample pass each."""
    predictions = np.zeros((model.n_layers, len(split)), dtype=np.int64)
    with no_grad():
        for position, sample in enumerate(split.samples()):
            for index, logits in enumerate(model.forward_all(sample.token_ids, sample.mask, sample.segment_ids)):
                predictions[index, position] = int(np.argmax(_probabilities(logits)))
    return predictions


def infer_batch(model: EarlyExitModel, split: EncodedSplit, policy: ExitPolicy,
                progress: bool = False) -> InferenceResult:
    """Early-exit inference over a split, sample by sample, timing the whole loop."""
    samples = list(split.samples())
    model.reset_layer_counter()
    start = time.perf_counter()
    records = [
        infer_early_exit(model, sample, policy)
        for sample in tqdm(samples, desc=f"S={policy.entropy_threshold:.4g}", unit="sample", disable=not progress)
    ]
    elapsed = time.perf_counter() - start
    result = InferenceResult(threshold=policy.entropy_threshold, records=records, wall_clock_s=elapsed)
    if model.layer_executions != result.layers_executed:
        logger.warning(
            f"layer counter {model.layer_executions} disagrees with records ({result.layers_executed})"
        )
    return result
