# Copyright (c) 2025 CoReason, Inc.
#
# This software is proprietary and dual-licensed.
# Licensed under the Prosperity Public License 3.0 (the "License").
# A copy of the license is available at https://prosperitylicense.com/versions/3.0.0
# For details, see the LICENSE file.
# Commercial use beyond a 30-day trial requires a separate license.
#
# Source Code: https://github.com/CoReason-AI/texflow

from typing import Any

"""
Exception hierarchy for texflow.
Every error carries the process exit code the CLI reports for it.
"""


class TexflowError(Exception):
    """Base class of all texflow errors."""

    exit_code: int = 1


class ConfigurationError(TexflowError, ValueError):
    """An invalid configuration, geometry, shape or parameter range."""

    exit_code = 2


class DomainError(ConfigurationError):
    """A kernel input outside its mathematical domain (e.g. non-positive density)."""


class UndefinedMetricError(ConfigurationError):
    """A metric that is undefined for its inputs (length mismatch, constant target for R²)."""


class DivergenceError(TexflowError):
    """
    Numerical blow-up in the solver or the training loop.

    Attributes:
        timestep (int | None): Simulation step at which divergence was detected.
        node (tuple[int, int] | None): Offending (row, col) node, if known.
        batch (int | None): Offending mini-batch index during training, if known.
    """

    exit_code = 3

    def __init__(
        self,
        message: str,
        *,
        timestep: int | None = None,
        node: tuple[int, int] | None = None,
        batch: int | None = None,
    ) -> None:
        self.timestep = timestep
        self.node = node
        self.batch = batch
        super().__init__(message)

    def at_timestep(self, timestep: int) -> "DivergenceError":
        """Returns a copy of this error annotated with the simulation step."""
        return DivergenceError(
            f"t={timestep}: {self.args[0]}", timestep=timestep, node=self.node, batch=self.batch
        )

    def context(self) -> dict[str, Any]:
        """Non-empty location attributes, suitable for `logger.contextualize`."""
        fields = {"timestep": self.timestep, "node": self.node, "batch": self.batch}
        return {k: v for k, v in fields.items() if v is not None}


class ArtifactIOError(TexflowError):
    """A run artifact (config, snapshot, manifest, dataset, checkpoint) is missing or corrupt."""

    exit_code = 4
