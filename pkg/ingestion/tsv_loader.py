import csv
import os
from typing import List, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from helpers.artifacts import ArtifactHelper
from helpers.logger_config import LoggerManager
from ingestion.schema import DatasetError, Example

logger = LoggerManager().get_logger()

UNWRITABLE_CHARACTERS = ("\t", "\n", "\r")


class TsvSchema(BaseModel):
    """
    Column layout of a GLUE-style TSV file (tab separated, header row, UTF-8).

    label_values maps label strings to class ids by position; when omitted the
    label column must already hold integer ids.
    """
    model_config = ConfigDict(frozen=True)

    text_a_column: str = "sentence"
    text_b_column: Optional[str] = None
    label_column: str = "label"
    label_values: Optional[List[str]] = Field(default=None, min_length=2)

    def encode_label(self, raw: str) -> int:
        raw = raw.strip()
        if self.label_values is not None:
            if raw not in self.label_values:
                raise ValueError(f"unknown label {raw!r} (expected one of {self.label_values})")
            return self.label_values.index(raw)
        try:
            return int(raw)
        except ValueError:
            raise ValueError(f"label {raw!r} is not an integer class id") from None

    def decode_label(self, label: int) -> str:
        return self.label_values[label] if self.label_values is not None else str(label)


def load_tsv(path: str, schema: TsvSchema) -> List[Example]:
    """Read one split; every malformed row is reported with its line number."""
    if not os.path.exists(path):
        raise DatasetError(f"TSV file not found: {path}")

    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.reader(f, delimiter="\t", quoting=csv.QUOTE_NONE)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetError(f"{path}: empty file, expected a header row") from None

        wanted = [schema.text_a_column, schema.label_column]
        if schema.text_b_column:
            wanted.append(schema.text_b_column)
        missing = [column for column in wanted if column not in header]
        if missing:
            raise DatasetError(f"{path}: missing column(s) {missing} in header {header}")
        columns = {name: header.index(name) for name in wanted}

        examples = []
        for line_number, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DatasetError(f"{path}:{line_number}: expected {len(header)} fields, found {len(row)}")
            try:
                label = schema.encode_label(row[columns[schema.label_column]])
                text_b = row[columns[schema.text_b_column]] if schema.text_b_column else None
                examples.append(Example(text_a=row[columns[schema.text_a_column]], text_b=text_b, label=label))
            except (ValueError, ValidationError) as e:
                raise DatasetError(f"{path}:{line_number}: {e}") from e

    logger.info(f"Loaded {len(examples)} example(s) from {path}")
    return examples


def _check_field(value: str, position: int, column: str) -> str:
    if any(ch in value for ch in UNWRITABLE_CHARACTERS):
        raise DatasetError(f"example {position}: column {column!r} contains a tab or line break: {value!r}")
    return value


def write_tsv(examples: List[Example], path: str, schema: TsvSchema) -> str:
    """
    Write one split in the layout load_tsv reads. Fields are written verbatim,
    without quoting or escaping, so quotes and backslashes survive a reload.
    """
    header = [schema.text_a_column]
    if schema.text_b_column:
        header.append(schema.text_b_column)
    header.append(schema.label_column)

    rows = [header]
    for position, example in enumerate(examples):
        row = [_check_field(example.text_a, position, schema.text_a_column)]
        if schema.text_b_column:
            row.append(_check_field(example.text_b or "", position, schema.text_b_column))
        row.append(_check_field(schema.decode_label(example.label), position, schema.label_column))
        rows.append(row)

    ArtifactHelper.ensure_save_dir_exists(os.path.dirname(path))
    with open(path, "w", encoding="utf-8", newline="") as f:
        for row in rows:
            f.write("\t".join(row) + "\n")
    logger.info(f"Wrote {len(examples)} example(s) to {path}")
    return path
