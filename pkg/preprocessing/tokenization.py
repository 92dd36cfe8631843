from collections import Counter
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

from ingestion.schema import Example

PAD, UNK, CLS, SEP = "[PAD]", "[UNK]", "[CLS]", "[SEP]"
RESERVED_TOKENS = (PAD, UNK, CLS, SEP)


class Vocab:
    """Whitespace-token vocabulary. Reserved ids 0..3 are PAD, UNK, CLS, SEP."""

    def __init__(self, tokens: Sequence[str]):
        ordered = list(RESERVED_TOKENS) + [t for t in tokens if t not in RESERVED_TOKENS]
        if len(set(ordered)) != len(ordered):
            raise ValueError("vocabulary tokens must be distinct")
        self._itos: List[str] = ordered
        self._stoi: Dict[str, int] = {token: i for i, token in enumerate(ordered)}

    @classmethod
    def build(cls, examples: Iterable[Example], min_freq: int = 1, max_size: Optional[int] = None) -> "Vocab":
        """Most frequent tokens first; ties broken alphabetically so the result is deterministic."""
        counts = Counter()
        for example in examples:
            counts.update(example.text_a.split())
            if example.text_b:
                counts.update(example.text_b.split())
        ranked = sorted((t for t, c in counts.items() if c >= min_freq), key=lambda t: (-counts[t], t))
        if max_size is not None:
            ranked = ranked[: max(0, max_size - len(RESERVED_TOKENS))]
        return cls(ranked)

    def __len__(self) -> int:
        return len(self._itos)

    def __contains__(self, token: str) -> bool:
        return token in self._stoi

    @property
    def pad_id(self) -> int:
        return self._stoi[PAD]

    @property
    def unk_id(self) -> int:
        return self._stoi[UNK]

    @property
    def cls_id(self) -> int:
        return self._stoi[CLS]

    @property
    def sep_id(self) -> int:
        return self._stoi[SEP]

    def id_of(self, token: str) -> int:
        return self._stoi.get(token, self.unk_id)

    def token_of(self, index: int) -> str:
        return self._itos[index]

    def to_list(self) -> List[str]:
        return list(self._itos)


@dataclass(frozen=True)
class EncodedExample:
    token_ids: np.ndarray
    mask: np.ndarray
    segment_ids: np.ndarray


def _truncate_pair(tokens_a: List[str], tokens_b: List[str], budget: int) -> None:
    """Drop tokens from the end of the longer segment until both fit."""
    while len(tokens_a) + len(tokens_b) > budget:
        if len(tokens_a) >= len(tokens_b):
            tokens_a.pop()
        else:
            tokens_b.pop()


def tokenize(example: Example, vocab: Vocab, max_len: int) -> EncodedExample:
    """
    Layout: [CLS] a... for single sentences, [CLS] a... [SEP] b... [SEP] for
    pairs, then PAD up to max_len. Segment ids are 0 up to and including the
    first [SEP], 1 after it. Overflow truncates the longer segment first.
    """
    tokens_a = example.text_a.split()
    if example.text_b is not None:
        if max_len < 3:
            raise ValueError(f"max_len {max_len} cannot hold a sentence pair")
        tokens_b = example.text_b.split()
        _truncate_pair(tokens_a, tokens_b, max_len - 3)
        ids = [vocab.cls_id] + [vocab.id_of(t) for t in tokens_a] + [vocab.sep_id]
        segments = [0] * len(ids)
        tail = [vocab.id_of(t) for t in tokens_b] + [vocab.sep_id]
        ids += tail
        segments += [1] * len(tail)
    else:
        if max_len < 1:
            raise ValueError(f"max_len must be positive, got {max_len}")
        ids = [vocab.cls_id] + [vocab.id_of(t) for t in tokens_a[: max_len - 1]]
        segments = [0] * len(ids)

    padding = max_len - len(ids)
    mask = [1] * len(ids) + [0] * padding
    ids += [vocab.pad_id] * padding
    segments += [0] * padding
    return EncodedExample(
        token_ids=np.asarray(ids, dtype=np.int64),
        mask=np.asarray(mask, dtype=np.int64),
        segment_ids=np.asarray(segments, dtype=np.int64),
    )
