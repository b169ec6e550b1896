# Copyright (c) 2025 CoReason, Inc.
#
# This software is proprietary and dual-licensed.
# Licensed under the Prosperity Public License 3.0 (the "License").
# A copy of the license is available at https://prosperitylicense.com/versions/3.0.0
# For details, see the LICENSE file.
# Commercial use beyond a 30-day trial requires a separate license.
#
# Source Code: https://github.com/CoReason-AI/texflow

import math
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, model_validator

"""
Pydantic schemas for configuration sections, run manifests and reports.
Every section forbids unknown keys so typos in run files fail loudly.
"""

CS2 = 1.0 / 3.0


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class ChannelSpec(_Section):
    """
    Textured-channel geometry in lattice nodes.

    Attributes:
        L (int): Channel length (grid width W).
        H (int): Channel height including the two wall rows (grid height).
        h (int): Texture height measured from each wall row.
        w (int): Texture width.
        s (int): Spacing between consecutive textures.
        offset (int): Column of the first texture.
    """

    L: int = Field(256, ge=1, description="Channel length in nodes.")
    H: int = Field(64, ge=3, description="Channel height in nodes, wall rows included.")
    h: int = Field(8, ge=0, description="Texture height in nodes (0 gives a smooth channel).")
    w: int = Field(16, ge=1, description="Texture width in nodes.")
    s: int = Field(48, ge=0, description="Inter-texture spacing in nodes.")
    offset: int = Field(16, ge=0, description="Column of the first texture.")

    @model_validator(mode="after")
    def check_geometry(self) -> "ChannelSpec":
        if 2 * self.h >= self.H:
            raise ValueError(f"texture height h={self.h} must satisfy h < H/2 (H={self.H})")
        if self.L < self.w:
            raise ValueError(f"channel length L={self.L} must be at least the texture width w={self.w}")
        return self

    @property
    def pitch(self) -> int:
        return self.w + self.s

    @classmethod
    def desk(cls) -> "ChannelSpec":
        return cls()

    @classmethod
    def paper(cls) -> "ChannelSpec":
        return cls(L=1000, H=100, h=20, w=40, s=160, offset=100)

    @classmethod
    def smooth(cls, H: int, L: int) -> "ChannelSpec":
        return cls(L=L, H=H, h=0, w=1, s=0, offset=0)


class BoundaryConfig(_Section):
    """
    Open-boundary values.

    Attributes:
        u_in (float): Uniform inlet velocity (lattice units).
        rho_out (float): Outlet density; the outlet pressure is c_s² rho_out.
    """

    u_in: float = Field(0.02, gt=0.0, lt=0.1)
    rho_out: float = Field(1.0, gt=0.0)

    @property
    def p_out(self) -> float:
        return CS2 * self.rho_out


# Early-transient capture set.
DEFAULT_CAPTURE_STEPS: tuple[int, ...] = (5, 50, 100, 500, 1000)


class SimulationConfig(_Section):
    """
    Time-loop parameters of one LBM run.

    The dynamic viscosity is never set directly: it follows from tau as
    nu = c_s² (tau - 1/2), exposed by the `nu` property.
    """

    channel: ChannelSpec = Field(default_factory=ChannelSpec)
    boundary: BoundaryConfig = Field(default_factory=BoundaryConfig)
    tau: float = Field(0.8, gt=0.5, description="BGK relaxation time.")
    force: tuple[float, float] = Field((0.0, 0.0), description="Body force (F_x, F_y) in lattice units.")
    n_steps: int = Field(2000, ge=1)
    snapshot_stride: int = Field(10, ge=1)
    capture_steps: tuple[int, ...] = DEFAULT_CAPTURE_STEPS
    periodic_x: bool = Field(False, description="Skip the inlet/outlet closures and wrap in x.")
    max_speed: float = Field(0.5, gt=0.0, description="Divergence threshold on |U|.")
    log_every: int = Field(500, ge=1)
    seed: int = 0

    @property
    def nu(self) -> float:
        return CS2 * (self.tau - 0.5)


class DatasetPolicy(_Section):
    """
    How snapshots become samples.

    Attributes:
        ranges (list[tuple[int, int]] | None): Explicit x-ranges; None selects the scaled default windows.
        window (int): Default window width on a 1000-column grid, scaled to the actual width.
        n_windows (int): Number of default windows.
        split (tuple[float, float, float]): Train/validation/test fractions over contiguous time blocks.
        include_mask (bool): Append the solid mask as a fifth input channel.
        allow_overlap (bool): Accept overlapping explicit ranges.
        split_mode (str): "time_block" (contiguous blocks in time order) or "random" (seeded permutation).
    """

    ranges: list[tuple[int, int]] | None = None
    window: int = Field(200, ge=1)
    n_windows: int = Field(4, ge=1)
    split: tuple[float, float, float] = (0.70, 0.15, 0.15)
    include_mask: bool = False
    allow_overlap: bool = False
    split_mode: Literal["time_block", "random"] = "time_block"

    @model_validator(mode="after")
    def check_split(self) -> "DatasetPolicy":
        if any(f < 0 for f in self.split) or not math.isclose(sum(self.split), 1.0, abs_tol=1e-9):
            raise ValueError(f"split fractions must be non-negative and sum to 1, got {self.split}")
        return self


class UNetConfig(_Section):
    """
    U-Net architecture.

    Attributes:
        in_channels (int): 4 (x, y, p, rho) or 5 with the solid mask.
        out_channels (int): Predicted channels (u, v).
        base_filters (int): Filters of the first encoder stage; doubled per stage.
        depth (int): Number of pooling stages.
        attention (bool): Gate skip connections with additive attention.
        dropout_rate (float): Dropout after each encoder block.
        pad_mode (str): "edge" pads inputs to a multiple of 2**depth; "none" rejects indivisible extents.
        dtype (str): Parameter and activation dtype.
        seed (int): Initialization seed.
    """

    in_channels: int = Field(4, ge=4, le=5)
    out_channels: int = Field(2, ge=1)
    base_filters: int = Field(8, ge=1)
    depth: int = Field(4, ge=1)
    attention: bool = False
    dropout_rate: float = Field(0.3, ge=0.0, lt=1.0)
    pad_mode: Literal["edge", "none"] = "edge"
    dtype: Literal["float32", "float64"] = "float32"
    seed: int = 0

    @property
    def filters(self) -> list[int]:
        return [self.base_filters * 2**i for i in range(self.depth)]


class TrainConfig(_Section):
    batch_size: int = Field(32, ge=1)
    learning_rate: float = Field(0.001, ge=0.0)
    epochs: int = Field(100, ge=1)
    shuffle_seed: int = 0
    checkpoint_every: int = Field(10, ge=1, description="Epochs between periodic checkpoints.")
    eval_train_loss: bool = Field(
        False, description="Re-measure the train loss in evaluation mode after each epoch (one extra pass)."
    )


class RenderConfig(_Section):
    x_over_l: tuple[float, ...] = (0.3, 0.8)
    scale: int = Field(2, ge=1, description="Pixel replication factor for heatmaps.")


class SnapshotRecord(BaseModel):
    t: int
    path: str
    field_min: dict[str, float]
    field_max: dict[str, float]


class RunManifest(BaseModel):
    """
    Record of one simulation run.

    Attributes:
        config (SimulationConfig): Echo of the configuration that produced the run.
        snapshots (list[SnapshotRecord]): Emitted snapshots in time order.
        solver_version (str): Package version of the solver.
        seconds_per_step (float): Mean wall-clock seconds per step.
        completed (bool): False when the run aborted on divergence.
        error (str | None): Divergence diagnostic of an aborted run.
    """

    config: SimulationConfig
    snapshots: list[SnapshotRecord] = Field(default_factory=list)
    solver_version: str
    seconds_per_step: float = 0.0
    completed: bool = True
    error: str | None = None
    created_at: str | None = None


class NormalizationStats(BaseModel):
    """
    Per-channel min-max statistics computed on the training split.

    Attributes:
        input_min, input_max (list[float]): One entry per input channel.
        target_min, target_max (list[float]): One entry per target channel.
        input_constant, target_constant (list[bool]): Channels whose range was degenerate (max set to min + 1).
    """

    input_names: list[str]
    target_names: list[str]
    input_min: list[float]
    input_max: list[float]
    target_min: list[float]
    target_max: list[float]
    input_constant: list[bool]
    target_constant: list[bool]


class SampleSource(BaseModel):
    run_id: str
    t: int
    x0: int
    x1: int

    @property
    def key(self) -> tuple[str, int, int, int]:
        return (self.run_id, self.t, self.x0, self.x1)


class DatasetManifest(BaseModel):
    policy: DatasetPolicy
    seed: int
    sources: list[SampleSource]
    splits: list[Literal["train", "val", "test"]]
    runs: list[str]
    input_names: list[str]
    target_names: list[str]


class EpochRecord(BaseModel):
    epoch: int
    train_loss: float
    val_loss: float
    train_loss_u: float
    train_loss_v: float
    val_loss_u: float
    val_loss_v: float


class TrainReport(BaseModel):
    model: UNetConfig
    train: TrainConfig
    epochs: list[EpochRecord] = Field(default_factory=list)
    best_epoch: int = 0
    best_val_loss: float = float("inf")
    best_checkpoint: str | None = None
    wall_clock_seconds: float = 0.0


class ChannelMetrics(BaseModel):
    mae: float
    mse: float
    rmse: float
    r2: float
    relative_l2: float


class MetricsReport(BaseModel):
    """
    Prediction quality on one split.

    Attributes:
        model (str): Label of the evaluated model.
        channels (dict[str, ChannelMetrics]): Per target channel ("u", "v", "magnitude").
        pooled (ChannelMetrics): All velocity components pooled.
        relative_error_percent (float): Range-normalized MAE, averaged over u and v.
        n (int): Number of fluid values per channel.
        denormalized (bool): Whether metrics are in lattice units.
    """

    model: str
    channels: dict[str, ChannelMetrics]
    pooled: ChannelMetrics
    relative_error_percent: float
    n: int
    denormalized: bool = True
    relative_error_definition: str = "100 * mean|y - yhat| / (max y - min y), per channel, averaged over u and v"


class CheckpointMeta(BaseModel):
    """
    Sidecar of a parameter checkpoint: everything needed to rebuild the model and map its outputs back.

    Attributes:
        model (UNetConfig): Architecture of the stored parameters.
        stats (NormalizationStats | None): Statistics of the training dataset.
        epoch (int | None): Epoch after which the parameters were saved.
        val_loss (float | None): Validation loss at that epoch.
    """

    model: UNetConfig
    stats: NormalizationStats | None = None
    epoch: int | None = None
    val_loss: float | None = None
