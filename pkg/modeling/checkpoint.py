"""
Binary checkpoint format (all integers little-endian):

    magic        8 bytes   b"EEXTCKPT"
    version      uint16    CHECKPOINT_VERSION
    config_len   uint32    byte length of the config JSON
    config       bytes     ModelConfig as UTF-8 JSON
    value_count  uint64    number of float64 values that follow
    values       float64   every parameter, flattened row-major, in declaration order
"""
import os
import struct

import numpy as np
from pydantic import ValidationError

from config import CHECKPOINT_MAGIC, CHECKPOINT_VERSION
from helpers.artifacts import ArtifactHelper
from helpers.logger_config import LoggerManager
from modeling.early_exit_model import EarlyExitModel
from modeling.model_config import ModelConfig

logger = LoggerManager().get_logger()

_HEADER = struct.Struct("<HI")
_COUNT = struct.Struct("<Q")


class CheckpointError(ValueError):
    """Raised for unreadable, truncated or incompatible checkpoint files."""


def save_model(model: EarlyExitModel, path: str) -> str:
    ArtifactHelper.ensure_save_dir_exists(os.path.dirname(path))
    config_bytes = model.config.model_dump_json().encode("utf-8")
    values = [p.data.reshape(-1) for _, p in model.named_parameters()]
    flat = np.concatenate(values).astype("<f8", copy=False)

    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(_HEADER.pack(CHECKPOINT_VERSION, len(config_bytes)))
        f.write(config_bytes)
        f.write(_COUNT.pack(flat.size))
        f.write(flat.tobytes())
    logger.info(f"Saved checkpoint with {flat.size} parameters to {path}")
    return path


def _read_exact(f, size: int, what: str, path: str) -> bytes:
    chunk = f.read(size)
    if len(chunk) != size:
        raise CheckpointError(f"{path}: truncated while reading {what} (wanted {size} bytes, got {len(chunk)})")
    return chunk


def load_model(path: str) -> EarlyExitModel:
    if not os.path.exists(path):
        raise FileNotFoundError(f"checkpoint not found: {path}")

    with open(path, "rb") as f:
        magic = f.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise CheckpointError(f"{path}: not an early-exit checkpoint (bad magic header {magic!r})")
        version, config_len = _HEADER.unpack(_read_exact(f, _HEADER.size, "header", path))
        if version != CHECKPOINT_VERSION:
            raise CheckpointError(f"{path}: format version {version} is not supported (expected {CHECKPOINT_VERSION})")
        try:
            config = ModelConfig.model_validate_json(_read_exact(f, config_len, "config", path))
        except ValidationError as e:
            raise CheckpointError(f"{path}: invalid model config: {e}") from e
        (count,) = _COUNT.unpack(_read_exact(f, _COUNT.size, "parameter count", path))
        payload = _read_exact(f, count * 8, "parameters", path)
        if f.read(1):
            raise CheckpointError(f"{path}: unexpected trailing bytes after parameters")

    model = EarlyExitModel(config)
    params = list(model.named_parameters())
    expected = sum(p.size for _, p in params)
    if count != expected:
        raise CheckpointError(f"{path}: holds {count} values but the config needs {expected}")

    flat = np.frombuffer(payload, dtype="<f8")
    offset = 0
    for _, tensor in params:
        tensor.data[...] = flat[offset:offset + tensor.size].reshape(tensor.shape)
        offset += tensor.size
    logger.info(f"Loaded checkpoint {path} ({config.n_layers} layers, {count} parameters)")
    return model
