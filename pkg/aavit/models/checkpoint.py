"""Binary checkpoint format.

    offset  size  content
    0       4     magic b"AAVT"
    4       4     format version, u32 little-endian
    8       4     byte length L of the config JSON, u32 little-endian
    12      L     ModelConfig as UTF-8 JSON
    12+L    ...   every parameter of ``parameter_specs(config)`` in that
                  order, row-major, as little-endian 32-bit floats

Nothing follows the last parameter. Files written in standard precision
load back bit for bit.
"""
import json
import logging
import os
import struct
from pathlib import Path
from typing import Optional, Tuple

import numpy as np
from pydantic import ValidationError

from aavit.errors import CheckpointError
from aavit.models.vit import ModelParams, parameter_specs
from aavit.schemas.model import ModelConfig

logger = logging.getLogger(__name__)

MAGIC = b"AAVT"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sII")
_FLOAT = np.dtype("<f4")

# fields that may differ between a checkpoint and the config asking for it
_RUNTIME_FIELDS = {"seed", "precision"}


def encode_checkpoint(config: ModelConfig, params: ModelParams) -> bytes:
    config_json = config.model_dump_json().encode("utf-8")
    chunks = [_HEADER.pack(MAGIC, FORMAT_VERSION, len(config_json)), config_json]
    for name, _, _ in parameter_specs(config):
        chunks.append(np.ascontiguousarray(params[name].data, dtype=_FLOAT).tobytes())
    return b"".join(chunks)


def decode_checkpoint(blob: bytes, source: str = "<bytes>") -> Tuple[ModelConfig, ModelParams]:
    if len(blob) < _HEADER.size:
        raise CheckpointError(f"{source}: truncated header")
    magic, version, config_len = _HEADER.unpack_from(blob, 0)
    if magic != MAGIC:
        raise CheckpointError(f"{source}: not a checkpoint (magic {magic!r})")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{source}: unsupported checkpoint version {version}, expected {FORMAT_VERSION}")

    offset = _HEADER.size
    try:
        config = ModelConfig.model_validate(json.loads(blob[offset:offset + config_len].decode("utf-8")))
    except (UnicodeDecodeError, json.JSONDecodeError, ValidationError) as exc:
        raise CheckpointError(f"{source}: unreadable model config: {exc}") from exc
    offset += config_len

    arrays = {}
    for name, shape, _ in parameter_specs(config):
        count = int(np.prod(shape, dtype=np.int64))
        end = offset + count * _FLOAT.itemsize
        if end > len(blob):
            raise CheckpointError(f"{source}: truncated while reading {name}")
        arrays[name] = np.frombuffer(blob, dtype=_FLOAT, count=count, offset=offset).reshape(shape)
        offset = end
    if offset != len(blob):
        raise CheckpointError(f"{source}: {len(blob) - offset} unexpected trailing bytes")
    return config, ModelParams.from_arrays(config, arrays)


def save_checkpoint(path: Path, config: ModelConfig, params: ModelParams) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(encode_checkpoint(config, params))
    os.replace(tmp, path)
    logger.info("wrote checkpoint %s (%d parameters)", path, params.count())
    return path


def load_checkpoint(path: Path, expected: Optional[ModelConfig] = None) -> Tuple[ModelConfig, ModelParams]:
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"checkpoint not found: {path}")
    config, params = decode_checkpoint(path.read_bytes(), source=str(path))
    if expected is not None:
        mismatched = sorted(
            field
            for field, value in config.model_dump().items()
            if field not in _RUNTIME_FIELDS and getattr(expected, field) != value
        )
        if mismatched:
            raise CheckpointError(f"{path}: checkpoint does not match the requested config ({', '.join(mismatched)})")
    return config, params
