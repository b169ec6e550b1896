# Copyright (c) 2025 CoReason, Inc.
#
# This software is proprietary and dual-licensed.
# Licensed under the Prosperity Public License 3.0 (the "License").
# A copy of the license is available at https://prosperitylicense.com/versions/3.0.0
# For details, see the LICENSE file.
# Commercial use beyond a 30-day trial requires a separate license.
#
# Source Code: https://github.com/CoReason-AI/texflow

import sys
from pathlib import Path

from loguru import logger

__all__ = ["configure_logging", "logger"]

_CONSOLE_FORMAT = (
    "<green>{time:YYYY-MM-DD HH:mm:ss}</green> | "
    "<level>{level: <8}</level> | "
    "<cyan>{name}</cyan>:<cyan>{function}</cyan>:<cyan>{line}</cyan> - "
    "<level>{message}</level>"
)


def configure_logging(level: str = "INFO", log_dir: str | Path = "logs") -> None:
    """
    (Re)installs the console and JSON file sinks at the given level.

    Args:
        level (str): Minimum level for both sinks.
        log_dir (str | Path): Directory receiving the rotating `app.log`.
    """
    logger.remove()

    # Sink 1: Stderr (Human-readable)
    logger.add(sys.stderr, level=level, format=_CONSOLE_FORMAT)

    log_path = Path(log_dir)
    if not log_path.exists():
        log_path.mkdir(parents=True, exist_ok=True)

    # Sink 2: File (JSON, Rotation, Retention)
    logger.add(
        str(log_path / "app.log"),
        rotation="500 MB",
        retention="10 days",
        serialize=True,
        enqueue=True,
        level=level,
    )


configure_logging()
