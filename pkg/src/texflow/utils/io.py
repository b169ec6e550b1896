# Copyright (c) 2025 CoReason, Inc.
#
# This software is proprietary and dual-licensed.
# Licensed under the Prosperity Public License 3.0 (the "License").
# A copy of the license is available at https://prosperitylicense.com/versions/3.0.0
# For details, see the LICENSE file.
# Commercial use beyond a 30-day trial requires a separate license.
#
# Source Code: https://github.com/CoReason-AI/texflow

import os
from pathlib import Path

from tenacity import Retrying, retry_if_exception_type, stop_after_attempt, wait_exponential

from texflow.config import get_settings
from texflow.exceptions import ArtifactIOError
from texflow.utils.logger import logger

"""
Artifact I/O with retries.
Transient filesystem errors (network mounts, busy files) are retried with exponential backoff;
persistent failures surface as ArtifactIOError.
"""


def io_retrying() -> Retrying:
    """
    Builds the retry policy for artifact reads and writes from the process settings.

    Returns:
        Retrying: A tenacity controller retrying OSError.
    """
    settings = get_settings()
    return Retrying(
        stop=stop_after_attempt(settings.RETRY_STOP_AFTER_ATTEMPT),
        wait=wait_exponential(
            multiplier=settings.RETRY_WAIT_MIN, min=settings.RETRY_WAIT_MIN, max=settings.RETRY_WAIT_MAX
        ),
        retry=retry_if_exception_type(OSError),
        reraise=True,
    )


def read_bytes(path: str | Path) -> bytes:
    """
    Reads a whole artifact.

    Args:
        path (str | Path): File to read.

    Returns:
        bytes: The file content.

    Raises:
        ArtifactIOError: If the file is missing or stays unreadable after retries.
    """
    target = Path(path)
    if not target.is_file():
        raise ArtifactIOError(f"Artifact not found: {target}")
    try:
        for attempt in io_retrying():
            with attempt:
                return target.read_bytes()
    except OSError as e:
        logger.exception(f"Failed to read {target}")
        raise ArtifactIOError(f"Unreadable artifact {target}: {e}") from e
    raise RuntimeError("Retry loop finished without result")  # pragma: no cover


def write_bytes(path: str | Path, data: bytes) -> Path:
    """
    Writes an artifact atomically (temporary file, then rename).

    Args:
        path (str | Path): Destination.
        data (bytes): Content.

    Returns:
        Path: The destination path.

    Raises:
        ArtifactIOError: If the write keeps failing after retries.
    """
    target = Path(path)
    tmp = target.with_name(target.name + ".tmp")
    try:
        for attempt in io_retrying():
            with attempt:
                target.parent.mkdir(parents=True, exist_ok=True)
                tmp.write_bytes(data)
                os.replace(tmp, target)
    except OSError as e:
        logger.exception(f"Failed to write {target}")
        raise ArtifactIOError(f"Cannot write artifact {target}: {e}") from e
    return target


def read_text(path: str | Path) -> str:
    """
    Reads a UTF-8 artifact.

    Raises:
        ArtifactIOError: If the file is unreadable or not valid UTF-8.
    """
    try:
        return read_bytes(path).decode("utf-8")
    except UnicodeDecodeError as e:
        raise ArtifactIOError(f"Artifact {path} is not valid UTF-8: {e}") from e


def write_text(path: str | Path, text: str) -> Path:
    return write_bytes(path, text.encode("utf-8"))
