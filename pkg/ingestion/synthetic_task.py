from typing import List, Set

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from helpers.logger_config import LoggerManager
from ingestion.schema import Dataset, DatasetError, Example, TaskInfo

logger = LoggerManager().get_logger()

EASY = "easy"
HARD = "hard"
MAX_ATTEMPTS = 1000


class SyntheticTaskSpec(BaseModel):
    """
    Keyword classification task with two difficulty strata.

    easy: a class keyword sits at the start of the sequence (repeated
          keyword_repeats times); one token decides the label.
    hard: no keyword; a left marker near the start and a right marker at the
          end together decide the label as (left + right) mod n_classes, so
          neither token alone carries any class signal.
    Remaining positions are filler words drawn uniformly from vocab_size fillers.
    """
    model_config = ConfigDict(frozen=True, extra="forbid")

    name: str = "synthetic-keywords"
    n_classes: int = Field(default=2, ge=2)
    vocab_size: int = Field(default=40, ge=2, description="Number of filler words")
    n_keywords: int = Field(default=4, ge=1)
    n_train: int = Field(default=2000, ge=1)
    n_dev: int = Field(default=500, ge=1)
    n_test: int = Field(default=0, ge=0)
    easy_fraction: float = Field(default=0.6, ge=0.0, le=1.0)
    min_length: int = Field(default=8, ge=3)
    max_length: int = Field(default=14, ge=3)
    keyword_repeats: int = Field(default=2, ge=1)
    paired: bool = False

    @model_validator(mode="after")
    def _lengths_consistent(self):
        if self.max_length < self.min_length:
            raise ValueError(f"max_length {self.max_length} < min_length {self.min_length}")
        if self.keyword_repeats >= self.min_length:
            raise ValueError(f"keyword_repeats {self.keyword_repeats} must be below min_length {self.min_length}")
        return self


class _Generator:
    def __init__(self, spec: SyntheticTaskSpec, seed: int):
        self.spec = spec
        self.rng = np.random.default_rng(seed)
        self.fillers = [f"w{j}" for j in range(spec.vocab_size)]
        self.keywords_by_class = [
            [f"key{j}" for j in range(spec.n_keywords) if j % spec.n_classes == label]
            for label in range(spec.n_classes)
        ]
        self.seen: Set[tuple] = set()

    def _fillers(self, length: int) -> List[str]:
        return [self.fillers[j] for j in self.rng.integers(0, len(self.fillers), size=length)]

    def _easy_tokens(self, label: int) -> List[str]:
        length = int(self.rng.integers(self.spec.min_length, self.spec.max_length + 1))
        tokens = self._fillers(length)
        choices = self.keywords_by_class[label]
        keyword = choices[int(self.rng.integers(0, len(choices)))]
        tokens[: self.spec.keyword_repeats] = [keyword] * self.spec.keyword_repeats
        return tokens

    def _hard_tokens(self, label: int) -> List[str]:
        length = int(self.rng.integers(self.spec.min_length, self.spec.max_length + 1))
        tokens = self._fillers(length)
        left = int(self.rng.integers(0, self.spec.n_classes))
        right = (label - left) % self.spec.n_classes
        tokens[int(self.rng.integers(0, 2))] = f"lhs{left}"
        tokens[-1] = f"rhs{right}"
        return tokens

    def example(self, label: int, stratum: str) -> Example:
        for _ in range(MAX_ATTEMPTS):
            tokens = self._easy_tokens(label) if stratum == EASY else self._hard_tokens(label)
            if self.spec.paired:
                middle = len(tokens) // 2
                text_a, text_b = " ".join(tokens[:middle]), " ".join(tokens[middle:])
            else:
                text_a, text_b = " ".join(tokens), None
            key = (text_a, text_b)
            if key not in self.seen:
                self.seen.add(key)
                return Example(text_a=text_a, text_b=text_b, label=label, stratum=stratum)
        raise DatasetError(f"synthetic spec too small to draw another distinct {stratum} example")

    def split(self, count: int) -> List[Example]:
        labels = self.rng.permutation(np.arange(count) % self.spec.n_classes)
        n_easy = int(round(self.spec.easy_fraction * count))
        easy = np.zeros(count, dtype=bool)
        easy[self.rng.permutation(count)[:n_easy]] = True
        return [self.example(int(label), EASY if is_easy else HARD) for label, is_easy in zip(labels, easy)]


def make_synthetic_task(spec: SyntheticTaskSpec, seed: int) -> Dataset:
    """Generate train/dev(/test) splits. Content is a pure function of (spec, seed); splits never share a text."""
    if spec.n_keywords < spec.n_classes:
        raise DatasetError(
            f"infeasible synthetic spec: {spec.n_classes} classes need at least as many keywords, got {spec.n_keywords}"
        )

    generator = _Generator(spec, seed)
    splits = {"train": generator.split(spec.n_train), "dev": generator.split(spec.n_dev)}
    if spec.n_test:
        splits["test"] = generator.split(spec.n_test)

    task = TaskInfo(name=spec.name, n_classes=spec.n_classes, paired=spec.paired,
                    metric="f1" if spec.paired and spec.n_classes == 2 else "accuracy")
    logger.info(
        f"Generated synthetic task {spec.name!r} (seed {seed}): "
        + ", ".join(f"{name}={len(examples)}" for name, examples in splits.items())
    )
    return Dataset(task=task, splits=splits)
