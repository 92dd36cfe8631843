from typing import List, Optional, Sequence

from pydantic import BaseModel

from evaluation.quality import quality
from evaluation.savings import ExitHistogram
from inference.early_exit import ramp_predictions
from modeling.early_exit_model import EarlyExitModel
from preprocessing.batching import EncodedSplit


class LayerSummary(BaseModel):
    layer: int
    quality: float
    gain: float
    exit_fraction: Optional[float] = None


def layerwise_quality(model: EarlyExitModel, split: EncodedSplit, metric: str = "accuracy") -> List[float]:
    """Quality of forcing every sample to exit at ramp i, for i = 1..n."""
    if len(split) == 0:
        raise ValueError("layerwise_quality needs a non-empty split")
    predictions = ramp_predictions(model, split)
    return [quality(row, split.labels, metric) for row in predictions]


def layer_gains(qualities: Sequence[float], reference: float = 0.0) -> List[float]:
    """
    Improvement of each ramp over the best shallower ramp. The first ramp is
    compared against `reference` (e.g. chance level).
    """
    gains, best = [], reference
    for value in qualities:
        gains.append(value - best)
        best = max(best, value)
    return gains


def redundant_layers(qualities: Sequence[float], min_gain: float = 0.0, reference: float = 0.0) -> List[int]:
    """1-based layers from 2 up whose ramp gains no more than `min_gain` over every shallower ramp."""
    gains = layer_gains(qualities, reference)
    return [layer for layer, gain in enumerate(gains, start=1) if layer > 1 and gain <= min_gain]


def exit_share_by_gain(histogram: ExitHistogram, qualities: Sequence[float],
                       reference: float = 0.0) -> List[LayerSummary]:
    """Pair each layer's exit fraction with its quality gain."""
    if len(qualities) != histogram.n_layers:
        raise ValueError(f"{len(qualities)} quality value(s) for {histogram.n_layers} layer(s)")
    fractions = histogram.fractions()
    return [
        LayerSummary(layer=layer, quality=value, gain=gain, exit_fraction=fraction)
        for layer, (value, gain, fraction) in enumerate(zip(qualities, layer_gains(qualities, reference), fractions),
                                                         start=1)
    ]
