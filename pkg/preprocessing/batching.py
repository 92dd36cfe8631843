from dataclasses import dataclass
from typing import Iterator, List, Optional, Sequence

import numpy as np

from ingestion.schema import Example
from preprocessing.tokenization import Vocab, tokenize


@dataclass(frozen=True)
class EncodedSample:
    """One tokenized sample shaped as a batch of one."""
    sample_id: int
    token_ids: np.ndarray
    mask: np.ndarray
    segment_ids: np.ndarray
    label: int
    stratum: Optional[str] = None


@dataclass(frozen=True)
class EncodedSplit:
    """Padded id matrices for a whole split; row i is sample i."""
    token_ids: np.ndarray
    mask: np.ndarray
    segment_ids: np.ndarray
    labels: np.ndarray
    sample_ids: np.ndarray
    strata: tuple

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    def take(self, indices: Sequence[int]) -> "EncodedSplit":
        indices = np.asarray(indices, dtype=np.int64)
        return EncodedSplit(
            token_ids=self.token_ids[indices],
            mask=self.mask[indices],
            segment_ids=self.segment_ids[indices],
            labels=self.labels[indices],
            sample_ids=self.sample_ids[indices],
            strata=tuple(self.strata[i] for i in indices),
        )

    def sample(self, position: int) -> EncodedSample:
        return EncodedSample(
            sample_id=int(self.sample_ids[position]),
            token_ids=self.token_ids[position: position + 1],
            mask=self.mask[position: position + 1],
            segment_ids=self.segment_ids[position: position + 1],
            label=int(self.labels[position]),
            stratum=self.strata[position],
        )

    def samples(self) -> Iterator[EncodedSample]:
        for position in range(len(self)):
            yield self.sample(position)


def encode_split(examples: List[Example], vocab: Vocab, max_len: int) -> EncodedSplit:
    encoded = [tokenize(example, vocab, max_len) for example in examples]
    if not encoded:
        empty = np.zeros((0, max_len), dtype=np.int64)
        return EncodedSplit(empty, empty, empty, np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64), ())
    return EncodedSplit(
        token_ids=np.stack([e.token_ids for e in encoded]),
        mask=np.stack([e.mask for e in encoded]),
        segment_ids=np.stack([e.segment_ids for e in encoded]),
        labels=np.asarray([example.label for example in examples], dtype=np.int64),
        sample_ids=np.arange(len(examples), dtype=np.int64),
        strata=tuple(example.stratum for example in examples),
    )


def iterate_batches(split: EncodedSplit, batch_size: int, seed: int = 0, shuffle: bool = True,
                    epoch: int = 0) -> Iterator[EncodedSplit]:
    """
    Yield consecutive batches covering every sample exactly once.

    The shuffle order depends only on (seed, epoch), so each epoch sees a
    different but reproducible order.
    """
    if batch_size < 1:
        raise ValueError(f"batch_size must be at least 1, got {batch_size}")
    order = np.arange(len(split))
    if shuffle:
        order = np.random.default_rng([seed, epoch]).permutation(order)
    for start in range(0, len(order), batch_size):
        yield split.take(order[start: start + batch_size])
