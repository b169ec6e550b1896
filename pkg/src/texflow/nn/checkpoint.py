# Copyright (c) 2025 CoReason, Inc.
#
# This software is proprietary and dual-licensed.
# Licensed under the Prosperity Public License 3.0 (the "License").
# A copy of the license is available at https://prosperitylicense.com/versions/3.0.0
# For details, see the LICENSE file.
# Commercial use beyond a 30-day trial requires a separate license.
#
# Source Code: https://github.com/CoReason-AI/texflow

import struct
from pathlib import Path

import numpy as np
from pydantic import ValidationError

from texflow.exceptions import ArtifactIOError
from texflow.nn.tensor import Array, ParameterStore
from texflow.schemas import CheckpointMeta
from texflow.utils.io import read_bytes, read_text, write_bytes, write_text

"""
Parameter checkpoints.

Layout (little-endian):
    magic "TXFW" | version u16 | parameter count u32
    then per parameter: name length u16 | name (utf-8) | rank u8 | rank x u32 extents | f32 data, row-major
A JSON sidecar with the same stem carries the model configuration and normalization statistics.
"""

MAGIC = b"TXFW"
VERSION = 1
_HEADER = struct.Struct("<4sHI")


def encode_parameters(arrays: dict[str, Array]) -> bytes:
    chunks = [_HEADER.pack(MAGIC, VERSION, len(arrays))]
    for name, array in arrays.items():
        encoded = name.encode("utf-8")
        if len(encoded) > 0xFFFF or array.ndim > 0xFF:
            raise ArtifactIOError(f"Parameter '{name}' cannot be encoded")
        chunks.append(struct.pack("<H", len(encoded)) + encoded)
        chunks.append(struct.pack(f"<B{array.ndim}I", array.ndim, *array.shape))
        chunks.append(np.ascontiguousarray(array, dtype="<f4").tobytes())
    return b"".join(chunks)


def decode_parameters(blob: bytes, source: str = "<bytes>") -> dict[str, np.ndarray]:
    """
    Parses a TXFW payload into float32 arrays in file order.

    Raises:
        ArtifactIOError: On a bad magic, version, truncation, duplicate name or trailing bytes.
    """
    if len(blob) < _HEADER.size:
        raise ArtifactIOError(f"{source}: truncated header")
    magic, version, count = _HEADER.unpack_from(blob, 0)
    if magic != MAGIC:
        raise ArtifactIOError(f"{source}: bad magic {magic!r}")
    if version != VERSION:
        raise ArtifactIOError(f"{source}: unsupported version {version}")
    offset = _HEADER.size
    arrays: dict[str, np.ndarray] = {}
    try:
        for _ in range(count):
            (name_len,) = struct.unpack_from("<H", blob, offset)
            offset += 2
            name = blob[offset : offset + name_len].decode("utf-8")
            offset += name_len
            (rank,) = struct.unpack_from("<B", blob, offset)
            shape = struct.unpack_from(f"<{rank}I", blob, offset + 1)
            offset += 1 + 4 * rank
            size = int(np.prod(shape, dtype=np.int64))
            if offset + 4 * size > len(blob):
                raise ArtifactIOError(f"{source}: truncated data of '{name}'")
            if name in arrays:
                raise ArtifactIOError(f"{source}: duplicate parameter '{name}'")
            arrays[name] = np.frombuffer(blob, dtype="<f4", count=size, offset=offset).reshape(shape).astype(np.float32)
            offset += 4 * size
    except (struct.error, UnicodeDecodeError) as e:
        raise ArtifactIOError(f"{source}: corrupt parameter table: {e}") from e
    if offset != len(blob):
        raise ArtifactIOError(f"{source}: {len(blob) - offset} trailing bytes")
    return arrays


def sidecar_path(path: str | Path) -> Path:
    return Path(path).with_suffix(".json")


def save_checkpoint(path: str | Path, params: ParameterStore, meta: CheckpointMeta) -> Path:
    """
    Writes the parameters and their JSON sidecar.

    Args:
        path (str | Path): Destination of the binary file (conventionally `*.txfw`).
        params (ParameterStore): Parameters to store (as f32).
        meta (CheckpointMeta): Model configuration and statistics.

    Returns:
        Path: The binary checkpoint path.
    """
    target = write_bytes(path, encode_parameters(params.state()))
    write_text(sidecar_path(target), meta.model_dump_json(indent=2))
    return target


def load_checkpoint(path: str | Path) -> tuple[dict[str, np.ndarray], CheckpointMeta]:
    """
    Reads a checkpoint and its sidecar.

    Raises:
        ArtifactIOError: If either file is missing or malformed.
    """
    arrays = decode_parameters(read_bytes(path), source=str(path))
    try:
        meta = CheckpointMeta.model_validate_json(read_text(sidecar_path(path)))
    except ValidationError as e:
        raise ArtifactIOError(f"Malformed checkpoint sidecar for {path}: {e}") from e
    return arrays, meta
