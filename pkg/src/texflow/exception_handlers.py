# Copyright (c) 2025 CoReason, Inc.
#
# This software is proprietary and dual-licensed.
# Licensed under the Prosperity Public License 3.0 (the "License").
# A copy of the license is available at https://prosperitylicense.com/versions/3.0.0
# For details, see the LICENSE file.
# Commercial use beyond a 30-day trial requires a separate license.
#
# Source Code: https://github.com/CoReason-AI/texflow

from pydantic import ValidationError

from texflow.exceptions import (
    ArtifactIOError,
    ConfigurationError,
    DivergenceError,
    TexflowError,
)
from texflow.utils.logger import logger

"""
Exception handlers for the command-line interface.
Maps pipeline errors to log records and process exit codes.
"""


def configuration_error_handler(exc: ConfigurationError) -> int:
    """
    Handles invalid configurations, geometries, shapes and metric inputs.

    Args:
        exc (ConfigurationError): The raised error.

    Returns:
        int: Exit code 2.
    """
    logger.error(f"Configuration error: {exc}")
    return exc.exit_code


def validation_error_handler(exc: ValidationError) -> int:
    """
    Handles pydantic validation failures that escaped the config loader (e.g. manifests built in code).

    Returns:
        int: Exit code 2.
    """
    logger.error(f"Invalid value: {exc}")
    return ConfigurationError.exit_code


def divergence_error_handler(exc: DivergenceError) -> int:
    """
    Handles numerical blow-up in the solver or the training loop.

    The error location (timestep, node, batch) is attached to the log record.

    Returns:
        int: Exit code 3.
    """
    with logger.contextualize(**exc.context()):
        logger.error(f"Numerical divergence: {exc}")
    return exc.exit_code


def artifact_io_error_handler(exc: ArtifactIOError) -> int:
    """
    Handles missing or corrupt artifacts.

    Returns:
        int: Exit code 4.
    """
    logger.error(f"Artifact error: {exc}")
    return exc.exit_code


def handle_exception(exc: BaseException) -> int:
    """
    Dispatches an exception to its handler.

    Args:
        exc (BaseException): The exception that ended a command.

    Returns:
        int: The process exit code; 1 for anything unexpected, which is logged with its traceback.
    """
    if isinstance(exc, DivergenceError):
        return divergence_error_handler(exc)
    if isinstance(exc, ArtifactIOError):
        return artifact_io_error_handler(exc)
    if isinstance(exc, ConfigurationError):
        return configuration_error_handler(exc)
    if isinstance(exc, ValidationError):
        return validation_error_handler(exc)
    if isinstance(exc, TexflowError):
        logger.error(f"texflow error: {exc}")
        return exc.exit_code
    logger.opt(exception=exc).error(f"Unexpected error: {exc!r}")
    return 1
