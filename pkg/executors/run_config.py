import json
import os
from typing import List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from config import (
    DEFAULT_OUTPUT_DIR,
    DEFAULT_SEED,
    OPERATING_POINT_BUDGETS,
    SWEEP_GRID_MIN,
    SWEEP_GRID_SIZE,
)
from evaluation.tradeoff import validate_threshold_grid
from ingestion.synthetic_task import SyntheticTaskSpec
from ingestion.tsv_loader import TsvSchema
from training.two_stage import TrainConfig


class ConfigError(ValueError):
    """Raised when a run configuration cannot be read or validated."""


class ModelOptions(BaseModel):
    """ModelConfig fields chosen by the user; vocab_size and n_classes come from the data."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    n_layers: int = Field(default=4, ge=1)
    hidden_size: int = Field(default=32, ge=1)
    n_heads: int = Field(default=4, ge=1)
    ffn_size: int = Field(default=64, ge=1)
    max_seq_len: int = Field(default=16, ge=2)
    dropout_rate: float = Field(default=0.0, ge=0.0, lt=1.0)


class TsvSource(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    name: str = "tsv-task"
    train_path: str
    dev_path: str
    test_path: Optional[str] = None
    n_classes: int = Field(ge=2)
    paired: bool = False
    metric: Literal["accuracy", "f1"] = "accuracy"
    columns: TsvSchema = Field(default_factory=TsvSchema)

    @model_validator(mode="after")
    def _paths_exist(self):
        for field_name in ("train_path", "dev_path", "test_path"):
            path = getattr(self, field_name)
            if path is not None and not os.path.isfile(path):
                raise ValueError(f"{field_name} {path!r} does not exist")
        if self.paired and not self.columns.text_b_column:
            raise ValueError("a paired task needs columns.text_b_column")
        return self


class SweepOptions(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    grid: Optional[List[float]] = Field(default=None, description="Explicit thresholds; default grid when omitted")
    grid_size: int = Field(default=SWEEP_GRID_SIZE, ge=2)
    grid_min: float = Field(default=SWEEP_GRID_MIN, gt=0.0)
    split: str = "dev"
    repeats: int = Field(default=1, ge=1, description="Timed runs per threshold; the fastest is kept")
    timing_repeats: int = Field(default=3, ge=1, description="Timed runs per threshold for expected-vs-measured")
    budgets: List[float] = Field(default_factory=lambda: list(OPERATING_POINT_BUDGETS))
    turning_tolerance: float = Field(default=0.5, ge=0.0)
    redundancy_min_gain: float = Field(default=0.0)

    @field_validator("grid")
    @classmethod
    def _grid_valid(cls, value):
        return None if value is None else validate_threshold_grid(value)


class RunConfig(BaseModel):
    """One reproducible experiment: data source, model shape, training, sweep and output location."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    seed: int = DEFAULT_SEED
    output_dir: str = DEFAULT_OUTPUT_DIR
    synthetic: Optional[SyntheticTaskSpec] = None
    tsv: Optional[TsvSource] = None
    min_token_freq: int = Field(default=1, ge=1)
    model: ModelOptions = Field(default_factory=ModelOptions)
    training: TrainConfig = Field(default_factory=TrainConfig)
    sweep: SweepOptions = Field(default_factory=SweepOptions)

    @model_validator(mode="after")
    def _one_source(self):
        if (self.synthetic is None) == (self.tsv is None):
            raise ValueError("exactly one of 'synthetic' or 'tsv' must be given")
        return self

    @model_validator(mode="before")
    @classmethod
    def _seed_propagates(cls, data):
        # the run seed wins over any training.seed in the file
        if isinstance(data, dict):
            training = data.get("training") or {}
            if isinstance(training, TrainConfig):
                training = training.model_dump()
            if isinstance(training, dict):
                data = {**data, "training": {**training, "seed": data.get("seed", DEFAULT_SEED)}}
        return data

    @classmethod
    def load(cls, path: str) -> "RunConfig":
        if not os.path.isfile(path):
            raise ConfigError(f"config file not found: {path}")
        try:
            with open(path, "r", encoding="utf-8") as f:
                payload = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: invalid JSON ({e})") from e
        return cls.from_payload(payload, source=path)

    @classmethod
    def from_payload(cls, payload: dict, source: str = "config") -> "RunConfig":
        try:
            return cls.model_validate(payload)
        except ValidationError as e:
            problems = "; ".join(
                f"{'.'.join(str(part) for part in error['loc']) or '<root>'}: {error['msg']}" for error in e.errors()
            )
            raise ConfigError(f"{source}: {problems}") from e

    def with_overrides(self, seed: Optional[int] = None, output_dir: Optional[str] = None,
                       grid: Optional[List[float]] = None) -> "RunConfig":
        payload = self.model_dump()
        if seed is not None:
            payload["seed"] = seed
        if output_dir is not None:
            payload["output_dir"] = output_dir
        if grid is not None:
            payload["sweep"]["grid"] = grid
        return self.from_payload(payload, source="overrides")
