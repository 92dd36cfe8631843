from typing import Dict, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class DatasetError(ValueError):
    """Raised for malformed dataset files or infeasible dataset specs."""


class Example(BaseModel):
    model_config = ConfigDict(frozen=True)

    text_a: str
    text_b: Optional[str] = None
    label: int = Field(ge=0)
    stratum: Optional[str] = Field(default=None, description="Difficulty group of synthetic samples")

    @field_validator("text_a")
    @classmethod
    def _text_a_not_empty(cls, value: str) -> str:
        if not value.strip():
            raise ValueError("text_a must not be empty")
        return value


class TaskInfo(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str = "task"
    n_classes: int = Field(ge=2)
    paired: bool = False
    metric: Literal["accuracy", "f1"] = "accuracy"

    @model_validator(mode="after")
    def _f1_needs_binary(self):
        if self.metric == "f1" and self.n_classes != 2:
            raise ValueError("the f1 metric is only defined for binary tasks")
        return self


class Dataset(BaseModel):
    """Named splits of examples plus task metadata."""

    task: TaskInfo
    splits: Dict[str, List[Example]]

    @model_validator(mode="after")
    def _labels_in_range(self):
        for name, examples in self.splits.items():
            for position, example in enumerate(examples):
                if example.label >= self.task.n_classes:
                    raise ValueError(
                        f"split {name!r} example {position}: label {example.label} "
                        f"outside [0, {self.task.n_classes})"
                    )
        return self

    def split(self, name: str) -> List[Example]:
        if name not in self.splits:
            raise KeyError(f"dataset has no {name!r} split (available: {sorted(self.splits)})")
        return self.splits[name]
