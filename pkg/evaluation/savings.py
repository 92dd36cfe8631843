from collections import defaultdict
from fractions import Fraction
from typing import Dict, Iterable, List, Optional, Sequence

from pydantic import BaseModel, ConfigDict, Field, model_validator


class ExitHistogram(BaseModel):
    """counts[i - 1] is the number of samples that exited at layer i."""
    model_config = ConfigDict(frozen=True)

    n_layers: int = Field(ge=1)
    counts: List[int]

    @model_validator(mode="after")
    def _counts_match_layers(self):
        if len(self.counts) != self.n_layers:
            raise ValueError(f"histogram has {len(self.counts)} bin(s) for {self.n_layers} layer(s)")
        if any(count < 0 for count in self.counts):
            raise ValueError(f"histogram counts must be non-negative, got {self.counts}")
        return self

    @classmethod
    def from_exit_layers(cls, exit_layers: Iterable[int], n_layers: int) -> "ExitHistogram":
        counts = [0] * n_layers
        for layer in exit_layers:
            if not 1 <= layer <= n_layers:
                raise ValueError(f"exit layer {layer} outside [1, {n_layers}]")
            counts[layer - 1] += 1
        return cls(n_layers=n_layers, counts=counts)

    @property
    def total(self) -> int:
        return sum(self.counts)

    def fractions(self) -> List[float]:
        total = self.total
        if total == 0:
            raise ValueError("fractions of an empty histogram are undefined")
        return [count / total for count in self.counts]

    def layers_executed(self) -> int:
        return sum(layer * count for layer, count in enumerate(self.counts, start=1))


def expected_saving_fraction(hist: ExitHistogram) -> Fraction:
    """1 - sum(i * N_i) / sum(n * N_i), evaluated exactly."""
    total = hist.total
    if total == 0:
        raise ValueError("expected saving of an empty histogram is undefined")
    return 1 - Fraction(hist.layers_executed(), hist.n_layers * total)


def expected_saving(hist: ExitHistogram) -> float:
    return float(expected_saving_fraction(hist))


def exit_distribution(records: Sequence, n_layers: int) -> ExitHistogram:
    """Histogram of exit layers over a set of ExitRecords."""
    if not records:
        raise ValueError("exit_distribution needs at least one record")
    return ExitHistogram.from_exit_layers((record.exit_layer for record in records), n_layers)


def mean_exit_layer_by_stratum(records: Sequence, strata: Sequence[Optional[str]]) -> Dict[str, float]:
    """
    Mean exit layer per difficulty stratum. strata[sample_id] names the
    stratum of each record's sample; samples without one are skipped.
    """
    layers = defaultdict(list)
    for record in records:
        stratum = strata[record.sample_id]
        if stratum is not None:
            layers[stratum].append(record.exit_layer)
    return {stratum: sum(values) / len(values) for stratum, values in sorted(layers.items())}
