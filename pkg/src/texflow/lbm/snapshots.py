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
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.typing import NDArray
from pydantic import ValidationError

from texflow.exceptions import ArtifactIOError
from texflow.schemas import RunManifest, SnapshotRecord
from texflow.utils.io import read_bytes, read_text, write_bytes, write_text

"""
Snapshots of the macroscopic fields and their on-disk formats.

Field file layout (little-endian):
    magic "TXFS" | version u16 | H u32 | W u32 | t u64 | field count u8
    then per field: name length u8 | name (utf-8) | H*W f32, row-major
"""

MAGIC = b"TXFS"
VERSION = 1
_HEADER = struct.Struct("<4sHIIQB")
SNAPSHOT_FIELDS = ("rho", "p", "U", "V", "mask")
MANIFEST_NAME = "manifest.json"


@dataclass(frozen=True)
class FlowSnapshot:
    """
    Macroscopic fields captured at one timestep.

    Attributes:
        t (int): Timestep index.
        rho, p (NDArray): Density and pressure.
        U, V (NDArray): Force-corrected velocity; zero on solid nodes.
        mask (NDArray): Boolean solid mask.
    """

    t: int
    rho: NDArray[np.floating]
    p: NDArray[np.floating]
    U: NDArray[np.floating]
    V: NDArray[np.floating]
    mask: NDArray[np.bool_]

    @property
    def shape(self) -> tuple[int, int]:
        return (int(self.U.shape[0]), int(self.U.shape[1]))

    def fields(self) -> dict[str, NDArray[np.float32]]:
        """The snapshot as float32 field planes, mask encoded as 0/1."""
        return {
            "rho": np.asarray(self.rho, dtype=np.float32),
            "p": np.asarray(self.p, dtype=np.float32),
            "U": np.asarray(self.U, dtype=np.float32),
            "V": np.asarray(self.V, dtype=np.float32),
            "mask": self.mask.astype(np.float32),
        }


def encode_fields(t: int, fields: dict[str, NDArray[np.floating]]) -> bytes:
    """
    Serializes named (H, W) planes in the TXFS layout.

    Args:
        t (int): Timestep stored in the header.
        fields (dict[str, NDArray]): Planes of identical shape.

    Returns:
        bytes: The encoded file.

    Raises:
        ArtifactIOError: If the planes disagree in shape or a name is too long.
    """
    if not fields:
        raise ArtifactIOError("Cannot encode an empty field set")
    shapes = {np.shape(a) for a in fields.values()}
    if len(shapes) != 1 or len(next(iter(shapes))) != 2:
        raise ArtifactIOError(f"Field planes must share one 2-D shape, got {shapes}")
    height, width = next(iter(shapes))
    chunks = [_HEADER.pack(MAGIC, VERSION, height, width, t, len(fields))]
    for name, plane in fields.items():
        encoded = name.encode("utf-8")
        if len(encoded) > 255:
            raise ArtifactIOError(f"Field name too long: {name}")
        chunks.append(struct.pack("<B", len(encoded)) + encoded)
        chunks.append(np.ascontiguousarray(plane, dtype="<f4").tobytes())
    return b"".join(chunks)


def decode_fields(blob: bytes, source: str = "<bytes>") -> tuple[int, dict[str, NDArray[np.float32]]]:
    """
    Parses a TXFS payload.

    Args:
        blob (bytes): Encoded file.
        source (str): Name used in error messages.

    Returns:
        tuple[int, dict[str, NDArray]]: Timestep and float32 planes in file order.

    Raises:
        ArtifactIOError: On a bad magic, version, undecodable field name or truncated payload.
    """
    if len(blob) < _HEADER.size:
        raise ArtifactIOError(f"{source}: truncated header")
    magic, version, height, width, t, count = _HEADER.unpack_from(blob, 0)
    if magic != MAGIC:
        raise ArtifactIOError(f"{source}: bad magic {magic!r}")
    if version != VERSION:
        raise ArtifactIOError(f"{source}: unsupported version {version}")
    offset = _HEADER.size
    plane_bytes = 4 * height * width
    fields: dict[str, NDArray[np.float32]] = {}
    for _ in range(count):
        if offset >= len(blob):
            raise ArtifactIOError(f"{source}: truncated field table")
        (name_len,) = struct.unpack_from("<B", blob, offset)
        offset += 1
        try:
            name = blob[offset : offset + name_len].decode("utf-8")
        except UnicodeDecodeError as e:
            raise ArtifactIOError(f"{source}: field name at byte {offset} is not valid UTF-8") from e
        offset += name_len
        if offset + plane_bytes > len(blob):
            raise ArtifactIOError(f"{source}: truncated field '{name}'")
        plane = np.frombuffer(blob, dtype="<f4", count=height * width, offset=offset).reshape(height, width)
        fields[name] = plane.astype(np.float32)
        offset += plane_bytes
    if offset != len(blob):
        raise ArtifactIOError(f"{source}: {len(blob) - offset} trailing bytes")
    return int(t), fields


def write_fields(path: str | Path, t: int, fields: dict[str, NDArray[np.floating]]) -> Path:
    return write_bytes(path, encode_fields(t, fields))


def read_fields(path: str | Path) -> tuple[int, dict[str, NDArray[np.float32]]]:
    return decode_fields(read_bytes(path), source=str(path))


def write_snapshot(path: str | Path, snap: FlowSnapshot) -> Path:
    return write_fields(path, snap.t, dict(snap.fields()))


def read_snapshot(path: str | Path) -> FlowSnapshot:
    """
    Loads a snapshot file written by `write_snapshot`.

    Raises:
        ArtifactIOError: If the file lacks one of the snapshot fields.
    """
    t, fields = read_fields(path)
    missing = [name for name in SNAPSHOT_FIELDS if name not in fields]
    if missing:
        raise ArtifactIOError(f"{path}: not a snapshot, missing fields {missing}")
    return FlowSnapshot(
        t=t,
        rho=fields["rho"],
        p=fields["p"],
        U=fields["U"],
        V=fields["V"],
        mask=fields["mask"] > 0.5,
    )


def snapshot_record(snap: FlowSnapshot, path: str) -> SnapshotRecord:
    planes = {k: v for k, v in snap.fields().items() if k != "mask"}
    return SnapshotRecord(
        t=snap.t,
        path=path,
        field_min={k: float(v.min()) for k, v in planes.items()},
        field_max={k: float(v.max()) for k, v in planes.items()},
    )


def write_manifest(run_dir: str | Path, manifest: RunManifest) -> Path:
    return write_text(Path(run_dir) / MANIFEST_NAME, manifest.model_dump_json(indent=2))


def read_manifest(run_dir: str | Path, verify: bool = False) -> RunManifest:
    """
    Loads the manifest of a run directory.

    Args:
        run_dir (str | Path): Run directory (or the manifest file itself).
        verify (bool): Re-read every listed snapshot and compare against the recorded extrema.

    Returns:
        RunManifest: The parsed manifest.

    Raises:
        ArtifactIOError: If the manifest is unreadable, malformed, or a snapshot fails verification.
    """
    location = Path(run_dir)
    path = location if location.is_file() else location / MANIFEST_NAME
    try:
        manifest = RunManifest.model_validate_json(read_text(path))
    except ValidationError as e:
        raise ArtifactIOError(f"Malformed manifest {path}: {e}") from e
    if verify:
        for record in manifest.snapshots:
            snap = read_snapshot(path.parent / record.path)
            actual = snapshot_record(snap, record.path)
            if actual.field_min != record.field_min or actual.field_max != record.field_max:
                raise ArtifactIOError(f"Snapshot {record.path} does not match its manifest extrema")
    return manifest


def snapshot_paths(run_dir: str | Path, manifest: RunManifest) -> list[Path]:
    root = Path(run_dir)
    root = root.parent if root.is_file() else root
    return [root / record.path for record in manifest.snapshots]
