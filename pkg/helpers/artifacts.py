import os
import csv
import json
import hashlib
from typing import Any, Iterable, List, Sequence
from helpers.logger_config import LoggerManager

logger = LoggerManager().get_logger()


class ArtifactHelper:

    @staticmethod
    def ensure_save_dir_exists(save_dir):
        """Ensures that the save directory exists. Creates it if it does not exist."""
        if not save_dir:
            return
        try:
            os.makedirs(save_dir, exist_ok=True)
            logger.info(f"Ensured directory exists: {save_dir}")
        except OSError as e:
            logger.error(f"Error creating directory {save_dir}: {e}")
            raise

    @staticmethod
    def compute_file_hash(path: str) -> str:
        """SHA-256 of a file's bytes, used to compare checkpoints and CSV artifacts across runs."""
        digest = hashlib.sha256()
        with open(path, "rb") as f:
            for chunk in iter(lambda: f.read(1 << 16), b""):
                digest.update(chunk)
        return digest.hexdigest()

    @staticmethod
    def write_json(payload: Any, path: str) -> str:
        """Write a JSON document with sorted keys so reruns are byte-comparable."""
        ArtifactHelper.ensure_save_dir_exists(os.path.dirname(path))
        with open(path, "w", encoding="utf-8") as f:
            json.dump(payload, f, indent=2, sort_keys=True, default=str)
            f.write("\n")
        logger.info(f"Wrote {path}")
        return path

    @staticmethod
    def write_jsonl(rows: Iterable[Any], path: str) -> str:
        ArtifactHelper.ensure_save_dir_exists(os.path.dirname(path))
        count = 0
        with open(path, "w", encoding="utf-8") as f:
            for row in rows:
                f.write(json.dumps(row, sort_keys=True))
                f.write("\n")
                count += 1
        logger.info(f"Wrote {count} line(s) to {path}")
        return path

    @staticmethod
    def write_csv(rows: Iterable[Sequence[Any]], header: List[str], path: str) -> str:
        """Write rows under a fixed header. None becomes an empty cell."""
        ArtifactHelper.ensure_save_dir_exists(os.path.dirname(path))
        with open(path, "w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow(["" if value is None else value for value in row])
        logger.info(f"Wrote {path}")
        return path
