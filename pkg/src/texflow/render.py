# Copyright (c) 2025 CoReason, Inc.
#
# This software is proprietary and dual-licensed.
# Licensed under the Prosperity Public License 3.0 (the "License").
# A copy of the license is available at https://prosperitylicense.com/versions/3.0.0
# For details, see the LICENSE file.
# Commercial use beyond a 30-day trial requires a separate license.
#
# Source Code: https://github.com/CoReason-AI/texflow

import csv
import io
from collections.abc import Sequence
from pathlib import Path

import numpy as np
from numpy.typing import NDArray

from texflow.exceptions import ConfigurationError
from texflow.lbm.simulator import profile_at
from texflow.lbm.snapshots import read_fields
from texflow.metrics import vorticity
from texflow.utils.io import write_bytes, write_text
from texflow.utils.logger import logger

"""
Portable-pixmap heatmaps and velocity profile tables.
"""

_BLUE = np.array([0.0, 0.0, 255.0])
_WHITE = np.array([255.0, 255.0, 255.0])
_RED = np.array([255.0, 0.0, 0.0])


def colormap(field: NDArray[np.floating], vmin: float, vmax: float) -> NDArray[np.uint8]:
    """
    Linear blue-white-red colors for `field` on [vmin, vmax]; a degenerate range maps to white.

    Returns:
        NDArray[np.uint8]: (H, W, 3) RGB values.
    """
    values = np.asarray(field, dtype=np.float64)
    if vmax > vmin:
        t = np.clip((values - vmin) / (vmax - vmin), 0.0, 1.0)
    else:
        t = np.full(values.shape, 0.5)
    low = 2.0 * np.minimum(t, 0.5)[..., None]
    high = 2.0 * np.maximum(t - 0.5, 0.0)[..., None]
    rgb = np.where(t[..., None] <= 0.5, _BLUE + (_WHITE - _BLUE) * low, _WHITE + (_RED - _WHITE) * high)
    return np.rint(rgb).astype(np.uint8)


def encode_ppm(rgb: NDArray[np.uint8]) -> bytes:
    height, width, _ = rgb.shape
    return f"P6\n{width} {height}\n255\n".encode("ascii") + np.ascontiguousarray(rgb).tobytes()


def write_heatmap(
    path: str | Path, field: NDArray[np.floating], scale: int = 1, mask: NDArray[np.bool_] | None = None
) -> Path:
    """
    Writes a P6 heatmap (row 0 at the bottom of the image) and a `.txt` sidecar with the value range.

    Args:
        path (str | Path): Destination `.ppm`.
        field (NDArray): (H, W) values.
        scale (int): Pixel replication factor.
        mask (NDArray | None): Solid nodes, drawn black and excluded from the range.

    Returns:
        Path: The image path.
    """
    values = np.asarray(field, dtype=np.float64)
    shown = values if mask is None else values[~mask]
    vmin = float(shown.min()) if shown.size else 0.0
    vmax = float(shown.max()) if shown.size else 0.0
    rgb = colormap(values, vmin, vmax)
    if mask is not None:
        rgb[mask] = 0
    rgb = np.repeat(np.repeat(rgb[::-1], scale, axis=0), scale, axis=1)
    target = write_bytes(path, encode_ppm(rgb))
    write_text(target.with_suffix(".txt"), f"min: {vmin:.9g}\nmax: {vmax:.9g}\n")
    return target


def write_profiles(
    path: str | Path,
    fields: dict[str, NDArray[np.floating]],
    x_over_l: Sequence[float],
    mask: NDArray[np.bool_] | None = None,
) -> Path:
    """
    CSV of vertical profiles: a `y` column, then one column per (field, x/L) pair.
    """
    header = ["y"]
    columns = []
    rows = None
    for name, field in fields.items():
        for x in x_over_l:
            rows, values = profile_at(field, mask, x)
            header.append(f"{name}@x/L={x:g}")
            columns.append(values)
    if rows is None:
        raise ConfigurationError("write_profiles needs at least one field and position")
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    for i, y in enumerate(rows):
        writer.writerow([int(y)] + [f"{c[i]:.9g}" for c in columns])
    return write_text(path, buffer.getvalue())


def render_file(path: str | Path, out_dir: str | Path, x_over_l: Sequence[float], scale: int = 2) -> list[Path]:
    """
    Renders every plane of a TXFS field file.

    Produces `<stem>_<field>.ppm` per plane, and when both U and V are present also
    `<stem>_vorticity.ppm` and `<stem>_profiles.csv` (U at each x/L). Prediction files that carry
    U_true and V_true additionally get `<stem>_vorticity_true.ppm`, `<stem>_vorticity_error.ppm`
    (absolute difference) and U_true profile columns.

    Returns:
        list[Path]: Written images and tables.
    """
    source = Path(path)
    root = Path(out_dir)
    _, fields = read_fields(source)
    mask = fields["mask"] > 0.5 if "mask" in fields else None
    written = []
    for name, plane in fields.items():
        if name == "mask":
            continue
        written.append(write_heatmap(root / f"{source.stem}_{name}.ppm", plane, scale, mask))
    if "U" in fields and "V" in fields:
        omega = vorticity(fields["U"], fields["V"], mask)
        written.append(write_heatmap(root / f"{source.stem}_vorticity.ppm", omega, scale, mask))
        profiles = {"U": fields["U"]}
        if "U_true" in fields and "V_true" in fields:
            omega_true = vorticity(fields["U_true"], fields["V_true"], mask)
            written.append(write_heatmap(root / f"{source.stem}_vorticity_true.ppm", omega_true, scale, mask))
            omega_error = np.abs(omega_true - omega)
            written.append(write_heatmap(root / f"{source.stem}_vorticity_error.ppm", omega_error, scale, mask))
            profiles["U_true"] = fields["U_true"]
        written.append(write_profiles(root / f"{source.stem}_profiles.csv", profiles, x_over_l, mask))
    logger.info(f"Rendered {source.name}: {len(written)} artifact(s)")
    return written
