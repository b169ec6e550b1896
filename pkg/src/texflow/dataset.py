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
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal

import numpy as np
from numpy.typing import NDArray

from texflow.exceptions import ArtifactIOError, ConfigurationError
from texflow.lbm.snapshots import FlowSnapshot, read_manifest, read_snapshot, snapshot_paths
from texflow.schemas import DatasetManifest, DatasetPolicy, NormalizationStats, SampleSource
from texflow.utils.io import read_bytes, read_text, write_bytes, write_text
from texflow.utils.logger import logger

"""
Supervised samples from snapshot streams.
Each x-range patch of a snapshot becomes one sample: inputs (x, y, p, rho [, mask]) and targets (u, v).
"""

Split = Literal["train", "val", "test"]
INPUT_NAMES = ("x", "y", "p", "rho")
MASK_NAME = "mask"
TARGET_NAMES = ("u", "v")
CLAMP_LOW, CLAMP_HIGH = -0.05, 1.05
# Reference grid width the default windows are expressed on.
REFERENCE_WIDTH = 1000
_RECORD = struct.Struct("<III")


@dataclass(frozen=True)
class Patch:
    """
    Full-height slice of a snapshot over columns [x0, x1).

    Attributes:
        x0, x1 (int): Column range.
        rho, p, U, V (NDArray): Field slices of shape (H, x1 - x0).
        mask (NDArray): Solid mask slice.
    """

    x0: int
    x1: int
    rho: NDArray[np.floating]
    p: NDArray[np.floating]
    U: NDArray[np.floating]
    V: NDArray[np.floating]
    mask: NDArray[np.bool_]


@dataclass
class Sample:
    """
    One normalized training pair.

    Attributes:
        input (NDArray): (C_in, H, w) float32 in [0, 1] (clamped to [-0.05, 1.05]).
        target (NDArray): (2, H, w) float32.
        source (SampleSource): Provenance (run id, t, x-range).
        split (str): "train", "val" or "test".
    """

    input: NDArray[np.float32]
    target: NDArray[np.float32]
    source: SampleSource
    split: Split = "train"


@dataclass
class Dataset:
    """
    Immutable collection of samples with the train-split normalization statistics.

    Attributes:
        samples (list[Sample]): All samples in source order.
        stats (NormalizationStats): Min-max statistics from the training split.
        manifest (DatasetManifest): Policy, seed and per-sample provenance.
        masks (list[NDArray]): Solid mask of every sample, used to exclude solid nodes from metrics.
    """

    samples: list[Sample]
    stats: NormalizationStats
    manifest: DatasetManifest
    masks: list[NDArray[np.bool_]] = field(default_factory=list)

    def split(self, name: Split) -> list[Sample]:
        return [s for s in self.samples if s.split == name]

    def indices(self, name: Split) -> list[int]:
        return [i for i, s in enumerate(self.samples) if s.split == name]

    def counts(self) -> dict[str, int]:
        return {name: len(self.indices(name)) for name in ("train", "val", "test")}

    @property
    def in_channels(self) -> int:
        return len(self.stats.input_names)


def default_ranges(width: int, window: int = 200, n_windows: int = 4) -> list[tuple[int, int]]:
    """
    Contiguous x-windows scaled from a 1000-column reference grid.

    On W = 1000 this gives (0, 200), (200, 400), (400, 600), (600, 800).

    Args:
        width (int): Grid width W.
        window (int): Window width on the reference grid.
        n_windows (int): Number of windows.

    Returns:
        list[tuple[int, int]]: Ranges that fit inside [0, W].
    """
    scaled = max(1, int(round(window * width / REFERENCE_WIDTH)))
    ranges = [(k * scaled, (k + 1) * scaled) for k in range(n_windows)]
    return [(x0, x1) for x0, x1 in ranges if x1 <= width]


def validate_ranges(ranges: Sequence[tuple[int, int]], width: int, allow_overlap: bool = False) -> None:
    """
    Raises:
        ConfigurationError: If a range is empty, outside [0, W], or overlaps another one when not allowed.
    """
    if not ranges:
        raise ConfigurationError("At least one x-range is required")
    for x0, x1 in ranges:
        if not 0 <= x0 < x1 <= width:
            raise ConfigurationError(f"x-range ({x0}, {x1}) is outside [0, {width}]")
    if not allow_overlap:
        ordered = sorted(ranges)
        for (_, a1), (b0, _) in zip(ordered, ordered[1:], strict=False):
            if b0 < a1:
                raise ConfigurationError(f"x-ranges overlap: {ordered}")


def segment(snap: FlowSnapshot, ranges: Sequence[tuple[int, int]], allow_overlap: bool = False) -> list[Patch]:
    """
    Cuts a snapshot into full-height patches, one per x-range.

    Args:
        snap (FlowSnapshot): Source fields.
        ranges (Sequence[tuple[int, int]]): Column ranges [x0, x1).
        allow_overlap (bool): Accept overlapping ranges.

    Returns:
        list[Patch]: Patches in the order of `ranges`.

    Raises:
        ConfigurationError: If a range is invalid.
    """
    _, width = snap.shape
    validate_ranges(ranges, width, allow_overlap)
    return [
        Patch(
            x0=x0,
            x1=x1,
            rho=snap.rho[:, x0:x1],
            p=snap.p[:, x0:x1],
            U=snap.U[:, x0:x1],
            V=snap.V[:, x0:x1],
            mask=snap.mask[:, x0:x1],
        )
        for x0, x1 in ranges
    ]


def reassemble(patches: Sequence[NDArray[np.floating]], ranges: Sequence[tuple[int, int]]) -> NDArray[np.floating]:
    """
    Joins per-range arrays (..., H, w) back along x in source order.

    Raises:
        ConfigurationError: If the ranges are not contiguous or do not match the patch widths.
    """
    if len(patches) != len(ranges) or not patches:
        raise ConfigurationError("reassemble needs one patch per range")
    order = sorted(range(len(ranges)), key=lambda i: ranges[i][0])
    for a, b in zip(order, order[1:], strict=False):
        if ranges[a][1] != ranges[b][0]:
            raise ConfigurationError(f"Ranges are not contiguous: {ranges[a]} then {ranges[b]}")
    for i in order:
        if patches[i].shape[-1] != ranges[i][1] - ranges[i][0]:
            raise ConfigurationError(f"Patch width {patches[i].shape[-1]} does not match range {ranges[i]}")
    return np.concatenate([patches[i] for i in order], axis=-1)


def raw_channels(patch: Patch, include_mask: bool = False) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """
    Unnormalized input and target arrays of a patch.

    The x and y channels hold the global column and row indices.

    Returns:
        tuple[NDArray, NDArray]: Input (C_in, H, w) and target (2, H, w).
    """
    height, width = patch.U.shape
    cols = np.arange(patch.x0, patch.x1, dtype=np.float64)
    rows = np.arange(height, dtype=np.float64)
    planes = [
        np.broadcast_to(cols[None, :], (height, width)),
        np.broadcast_to(rows[:, None], (height, width)),
        np.asarray(patch.p, dtype=np.float64),
        np.asarray(patch.rho, dtype=np.float64),
    ]
    if include_mask:
        planes.append(patch.mask.astype(np.float64))
    target = np.stack([np.asarray(patch.U, dtype=np.float64), np.asarray(patch.V, dtype=np.float64)])
    return np.stack(planes), target


def _minmax(arrays: Sequence[NDArray[np.float64]], n_channels: int) -> tuple[list[float], list[float], list[bool]]:
    mins, maxs, constant = [], [], []
    for c in range(n_channels):
        lo = min(float(a[c].min()) for a in arrays)
        hi = max(float(a[c].max()) for a in arrays)
        flat = not hi > lo
        if flat:
            hi = lo + 1.0
        mins.append(lo)
        maxs.append(hi)
        constant.append(flat)
    return mins, maxs, constant


def compute_stats(
    inputs: Sequence[NDArray[np.float64]], targets: Sequence[NDArray[np.float64]], include_mask: bool = False
) -> NormalizationStats:
    """
    Per-channel min and max over the given (training) arrays.

    Degenerate channels get max = min + 1 and are flagged. The mask channel is fixed to [0, 1].

    Raises:
        ConfigurationError: If no arrays are given.
    """
    if not inputs or not targets:
        raise ConfigurationError("Normalization statistics need at least one training sample")
    input_names = list(INPUT_NAMES) + ([MASK_NAME] if include_mask else [])
    imin, imax, iconst = _minmax(inputs, len(input_names))
    if include_mask:
        imin[-1], imax[-1], iconst[-1] = 0.0, 1.0, False
    tmin, tmax, tconst = _minmax(targets, len(TARGET_NAMES))
    for names, flags in ((input_names, iconst), (TARGET_NAMES, tconst)):
        for name, flat in zip(names, flags, strict=True):
            if flat:
                logger.warning(f"Channel '{name}' is constant on the training split; using max = min + 1")
    return NormalizationStats(
        input_names=input_names,
        target_names=list(TARGET_NAMES),
        input_min=imin,
        input_max=imax,
        target_min=tmin,
        target_max=tmax,
        input_constant=iconst,
        target_constant=tconst,
    )


Bounds = tuple[NDArray[np.float64], NDArray[np.float64]]


def _bounds(stats: NormalizationStats, kind: Literal["input", "target"]) -> Bounds:
    lo = np.asarray(stats.input_min if kind == "input" else stats.target_min, dtype=np.float64)
    hi = np.asarray(stats.input_max if kind == "input" else stats.target_max, dtype=np.float64)
    return lo, hi


def _channel_view(values: NDArray[np.float64], n_channels: int, axis: int) -> tuple[int, ...]:
    if values.shape[axis] != n_channels:
        raise ConfigurationError(f"Expected {n_channels} channels on axis {axis}, got shape {values.shape}")
    shape = [1] * values.ndim
    shape[axis] = n_channels
    return tuple(shape)


def normalize(
    field_: NDArray[np.floating],
    stats: NormalizationStats,
    kind: Literal["input", "target"] = "input",
    axis: int = 0,
) -> NDArray[np.float64]:
    """
    Min-max scaling v' = (v - min) / (max - min), clamped to [-0.05, 1.05].

    Values from validation or test data may fall outside the training range; clamping is reported.

    Args:
        field_ (NDArray): Array with channels on `axis`.
        stats (NormalizationStats): Training statistics.
        kind (str): Which channel set ("input" or "target") the array holds.
        axis (int): Channel axis.

    Returns:
        NDArray: The normalized array (float64).

    Raises:
        ConfigurationError: If the channel count does not match the statistics.
    """
    values = np.asarray(field_, dtype=np.float64)
    lo, hi = _bounds(stats, kind)
    shape = _channel_view(values, lo.size, axis)
    scaled = (values - lo.reshape(shape)) / (hi - lo).reshape(shape)
    clamped = np.clip(scaled, CLAMP_LOW, CLAMP_HIGH)
    n_clamped = int(np.count_nonzero(clamped != scaled))
    if n_clamped:
        logger.warning(f"Clamped {n_clamped} {kind} values outside the training range")
    return clamped


def denormalize(
    field_: NDArray[np.floating],
    stats: NormalizationStats,
    kind: Literal["input", "target"] = "target",
    axis: int = 0,
) -> NDArray[np.float64]:
    """Inverse of `normalize` (without the clamp)."""
    values = np.asarray(field_, dtype=np.float64)
    lo, hi = _bounds(stats, kind)
    shape = _channel_view(values, lo.size, axis)
    return values * (hi - lo).reshape(shape) + lo.reshape(shape)


def assign_splits(n: int, policy: DatasetPolicy, seed: int) -> list[Split]:
    """
    Split labels for n samples listed in time order.

    "time_block" gives contiguous blocks (train first, then val, then test); "random" permutes with the seed.
    Counts are round(f_train n), round(f_val n) and the remainder.

    Returns:
        list[str]: One label per sample.
    """
    n_train = int(round(policy.split[0] * n))
    n_val = min(int(round(policy.split[1] * n)), n - n_train)
    labels: list[Split] = ["train"] * n_train + ["val"] * n_val + ["test"] * (n - n_train - n_val)
    if policy.split_mode == "random":
        order = np.random.default_rng(seed).permutation(n)
        shuffled: list[Split] = ["train"] * n
        for position, index in enumerate(order):
            shuffled[int(index)] = labels[position]
        return shuffled
    return labels


def build_dataset_from_snapshots(
    runs: Mapping[str, Sequence[FlowSnapshot]], policy: DatasetPolicy, seed: int = 0
) -> Dataset:
    """
    Segments, splits and normalizes in-memory snapshot streams.

    Samples are ordered by (run, t, x0); splits are assigned on that order and the
    statistics come from the training split only.

    Args:
        runs (Mapping[str, Sequence[FlowSnapshot]]): Snapshots keyed by run id.
        policy (DatasetPolicy): Segmentation and split policy.
        seed (int): Seed of the split assignment.

    Returns:
        Dataset: The normalized dataset.

    Raises:
        ConfigurationError: If there are no snapshots or the training split is empty.
    """
    raw_inputs: list[NDArray[np.float64]] = []
    raw_targets: list[NDArray[np.float64]] = []
    sources: list[SampleSource] = []
    masks: list[NDArray[np.bool_]] = []
    for run_id, snaps in runs.items():
        for snap in sorted(snaps, key=lambda s: s.t):
            ranges = policy.ranges or default_ranges(snap.shape[1], policy.window, policy.n_windows)
            for patch in sorted(segment(snap, ranges, policy.allow_overlap), key=lambda p: p.x0):
                inp, tgt = raw_channels(patch, policy.include_mask)
                raw_inputs.append(inp)
                raw_targets.append(tgt)
                masks.append(patch.mask.copy())
                sources.append(SampleSource(run_id=run_id, t=snap.t, x0=patch.x0, x1=patch.x1))
    if not sources:
        raise ConfigurationError("No snapshots to build a dataset from")
    splits = assign_splits(len(sources), policy, seed)
    train_idx = [i for i, s in enumerate(splits) if s == "train"]
    if not train_idx:
        raise ConfigurationError("The training split is empty")
    stats = compute_stats(
        [raw_inputs[i] for i in train_idx], [raw_targets[i] for i in train_idx], policy.include_mask
    )
    samples = [
        Sample(
            input=normalize(inp, stats, "input").astype(np.float32),
            target=normalize(tgt, stats, "target").astype(np.float32),
            source=src,
            split=split,
        )
        for inp, tgt, src, split in zip(raw_inputs, raw_targets, sources, splits, strict=True)
    ]
    manifest = DatasetManifest(
        policy=policy,
        seed=seed,
        sources=sources,
        splits=splits,
        runs=list(runs.keys()),
        input_names=stats.input_names,
        target_names=stats.target_names,
    )
    dataset = Dataset(samples=samples, stats=stats, manifest=manifest, masks=masks)
    logger.info(f"Built dataset: {dataset.counts()} samples from {len(runs)} run(s)")
    return dataset


def build_dataset(run_dirs: Sequence[str | Path], policy: DatasetPolicy, seed: int = 0) -> Dataset:
    """
    Builds a dataset from simulation run directories.

    Args:
        run_dirs (Sequence[str | Path]): Directories holding a manifest and snapshots.
        policy (DatasetPolicy): Segmentation and split policy.
        seed (int): Seed of the split assignment.

    Returns:
        Dataset: The normalized dataset.

    Raises:
        ConfigurationError: If no run is given or a manifest lists no snapshots.
        ArtifactIOError: If a manifest or snapshot cannot be read.
    """
    if not run_dirs:
        raise ConfigurationError("No run directories given")
    runs: dict[str, list[FlowSnapshot]] = {}
    for run_dir in run_dirs:
        manifest = read_manifest(run_dir)
        if not manifest.snapshots:
            raise ConfigurationError(f"Run {run_dir} has an empty manifest")
        run_id = Path(run_dir).name
        if run_id in runs:
            run_id = f"{run_id}-{len(runs)}"
        runs[run_id] = [read_snapshot(path) for path in snapshot_paths(run_dir, manifest)]
    return build_dataset_from_snapshots(runs, policy, seed)


def _encode_record(array: NDArray[np.float32]) -> bytes:
    channels, height, width = array.shape
    return _RECORD.pack(height, width, channels) + np.ascontiguousarray(array, dtype="<f4").tobytes()


def _decode_record(blob: bytes, offset: int) -> tuple[NDArray[np.float32], int]:
    if offset + _RECORD.size > len(blob):
        raise ArtifactIOError("samples.bin: truncated record header")
    height, width, channels = _RECORD.unpack_from(blob, offset)
    offset += _RECORD.size
    count = height * width * channels
    if offset + 4 * count > len(blob):
        raise ArtifactIOError("samples.bin: truncated record payload")
    array = np.frombuffer(blob, dtype="<f4", count=count, offset=offset).reshape(channels, height, width)
    return array.astype(np.float32), offset + 4 * count


def write_dataset(out_dir: str | Path, dataset: Dataset) -> Path:
    """
    Writes `manifest.json`, `stats.json` and `samples.bin` (input then target record per sample,
    mask records appended after all samples).

    Each record is [h u32, w u32, c u32] followed by c*h*w little-endian f32 values, channel-major and row-major.
    """
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    chunks = []
    for sample in dataset.samples:
        chunks.append(_encode_record(sample.input))
        chunks.append(_encode_record(sample.target))
    for mask in dataset.masks:
        chunks.append(_encode_record(mask[None].astype(np.float32)))
    write_bytes(root / "samples.bin", b"".join(chunks))
    write_text(root / "stats.json", dataset.stats.model_dump_json(indent=2))
    write_text(root / "manifest.json", dataset.manifest.model_dump_json(indent=2))
    return root


def read_dataset(path: str | Path) -> Dataset:
    """
    Loads a dataset directory written by `write_dataset`.

    Raises:
        ArtifactIOError: If a file is missing, truncated, or inconsistent with the manifest.
    """
    root = Path(path)
    try:
        manifest = DatasetManifest.model_validate_json(read_text(root / "manifest.json"))
        stats = NormalizationStats.model_validate_json(read_text(root / "stats.json"))
    except ValueError as e:
        raise ArtifactIOError(f"Malformed dataset metadata in {root}: {e}") from e
    blob = read_bytes(root / "samples.bin")
    offset = 0
    samples = []
    for source, split in zip(manifest.sources, manifest.splits, strict=True):
        inp, offset = _decode_record(blob, offset)
        tgt, offset = _decode_record(blob, offset)
        samples.append(Sample(input=inp, target=tgt, source=source, split=split))
    masks = []
    while offset < len(blob):
        plane, offset = _decode_record(blob, offset)
        masks.append(plane[0] > 0.5)
    if masks and len(masks) != len(samples):
        raise ArtifactIOError(f"{root}: {len(masks)} masks for {len(samples)} samples")
    return Dataset(samples=samples, stats=stats, manifest=manifest, masks=masks)
