from typing import Iterable

from config import EXIT_RECORD_CSV_COLUMNS
from helpers.artifacts import ArtifactHelper
from inference.early_exit import ExitRecord


def write_exit_records_jsonl(records: Iterable[ExitRecord], path: str) -> str:
    return ArtifactHelper.write_jsonl((record.model_dump() for record in records), path)


def write_exit_records_csv(records: Iterable[ExitRecord], path: str) -> str:
    return ArtifactHelper.write_csv((record.to_row() for record in records), EXIT_RECORD_CSV_COLUMNS, path)
