# Copyright (c) 2025 CoReason, Inc.
#
# This software is proprietary and dual-licensed.
# Licensed under the Prosperity Public License 3.0 (the "License").
# A copy of the license is available at https://prosperitylicense.com/versions/3.0.0
# For details, see the LICENSE file.
# Commercial use beyond a 30-day trial requires a separate license.
#
# Source Code: https://github.com/CoReason-AI/texflow

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from texflow.exceptions import ConfigurationError, DivergenceError
from texflow.lbm.core import D2Q9, D2Q9Model, FloatArray
from texflow.schemas import ChannelSpec

"""
Textured-channel geometry and boundary conditions.
Walls use halfway bounce-back; the inlet and outlet use Zou-He velocity and pressure closures.
"""


@dataclass(frozen=True)
class SolidMask:
    """
    Rasterized geometry and its fluid-to-solid links.

    Attributes:
        mask (NDArray): Boolean (H, W) grid, True on solid nodes.
        link_rows, link_cols (NDArray): Fluid node of every boundary link.
        link_dirs (NDArray): Direction p of every link, pointing into a solid node.
        periodic_x (bool): Whether links wrap across the inlet/outlet columns.
    """

    mask: NDArray[np.bool_]
    link_rows: NDArray[np.int64]
    link_cols: NDArray[np.int64]
    link_dirs: NDArray[np.int64]
    periodic_x: bool = False

    @property
    def shape(self) -> tuple[int, int]:
        return (int(self.mask.shape[0]), int(self.mask.shape[1]))

    @property
    def fluid(self) -> NDArray[np.bool_]:
        return ~self.mask

    def links(self) -> set[tuple[int, int, int]]:
        triples = zip(self.link_rows, self.link_cols, self.link_dirs, strict=True)
        return {(int(r), int(c), int(p)) for r, c, p in triples}

    @classmethod
    def from_array(cls, mask: NDArray[np.bool_], periodic_x: bool = False, model: D2Q9Model = D2Q9) -> "SolidMask":
        """
        Wraps a boolean grid and derives its boundary links.

        Neighbours outside the grid count as open unless `periodic_x` wraps the x-direction.
        """
        solid = np.asarray(mask, dtype=bool)
        if solid.ndim != 2:
            raise ConfigurationError(f"mask must be 2-D, got shape {solid.shape}")
        rows, cols, dirs = boundary_links(solid, periodic_x=periodic_x, model=model)
        return cls(mask=solid, link_rows=rows, link_cols=cols, link_dirs=dirs, periodic_x=periodic_x)


def boundary_links(
    solid: NDArray[np.bool_], periodic_x: bool = False, model: D2Q9Model = D2Q9
) -> tuple[NDArray[np.int64], NDArray[np.int64], NDArray[np.int64]]:
    """
    Every (fluid node, p) whose neighbour x + e_p is solid.

    Args:
        solid (NDArray): Boolean (H, W) mask.
        periodic_x (bool): Wrap neighbours across the x borders.
        model (D2Q9Model): Velocity set.

    Returns:
        tuple[NDArray, NDArray, NDArray]: Rows, columns and directions of the links.
    """
    height, width = solid.shape
    rows_all, cols_all, dirs_all = [], [], []
    r_idx, c_idx = np.nonzero(~solid)
    for p in range(1, 9):
        nr = r_idx + int(model.ey[p])
        nc = c_idx + int(model.ex[p])
        if periodic_x:
            nc = nc % width
        inside = (nr >= 0) & (nr < height) & (nc >= 0) & (nc < width)
        hit = np.zeros_like(inside)
        hit[inside] = solid[nr[inside], nc[inside]]
        rows_all.append(r_idx[hit])
        cols_all.append(c_idx[hit])
        dirs_all.append(np.full(int(hit.sum()), p, dtype=np.int64))
    return (
        np.concatenate(rows_all).astype(np.int64),
        np.concatenate(cols_all).astype(np.int64),
        np.concatenate(dirs_all),
    )


def texture_columns(spec: ChannelSpec) -> list[tuple[int, int]]:
    """Column spans [start, stop) of the textures, clipped at the outlet."""
    spans = []
    start = spec.offset
    while start < spec.L:
        spans.append((start, min(start + spec.w, spec.L)))
        start += spec.pitch
    return spans


def build_mask(spec: ChannelSpec, periodic_x: bool = False, model: D2Q9Model = D2Q9) -> SolidMask:
    """
    Rasterizes the textured channel.

    Rows 0 and H-1 are the walls. Textures of height h sit on both walls, with
    pitch w + s starting at column `offset`, clipped at the outlet.

    Args:
        spec (ChannelSpec): Geometry.
        periodic_x (bool): Derive links for an x-periodic domain.
        model (D2Q9Model): Velocity set.

    Returns:
        SolidMask: The grid of shape (H, L) and its boundary links.

    Raises:
        ConfigurationError: If the geometry is inconsistent.
    """
    if 2 * spec.h >= spec.H or spec.w < 1 or spec.s < 0 or spec.L < spec.w:
        raise ConfigurationError(f"Invalid channel geometry: {spec.model_dump()}")
    solid = np.zeros((spec.H, spec.L), dtype=bool)
    solid[0, :] = True
    solid[-1, :] = True
    if spec.h > 0:
        for c0, c1 in texture_columns(spec):
            solid[1 : spec.h + 1, c0:c1] = True
            solid[spec.H - 1 - spec.h : spec.H - 1, c0:c1] = True
    return SolidMask.from_array(solid, periodic_x=periodic_x, model=model)


def expected_solid_count(spec: ChannelSpec) -> int:
    """Closed-form solid node count: both wall rows plus two clipped texture blocks per span."""
    return 2 * spec.L + 2 * spec.h * sum(c1 - c0 for c0, c1 in texture_columns(spec))


def bounce_back(f: FloatArray, solid: SolidMask, model: D2Q9Model = D2Q9) -> FloatArray:
    """
    Halfway bounce-back, applied to post-collision populations before streaming.

    For every link (x, p) the outgoing f_p(x) is parked in slot opposite(p) of the
    solid node x + e_p; the following `stream` carries it back to x, so that
    f_opposite(p)(x) equals the post-collision f_p(x). Fluid nodes are not written.

    Args:
        f (NDArray): Post-collision populations, shape (9, H, W).
        solid (SolidMask): Geometry with precomputed links.
        model (D2Q9Model): Velocity set.

    Returns:
        NDArray: Populations with the solid-node ghost slots filled.
    """
    out = f.copy()
    height, width = solid.shape
    dirs = solid.link_dirs
    tr = (solid.link_rows + model.ey[dirs]) % height
    tc = (solid.link_cols + model.ex[dirs]) % width
    out[model.opposite[dirs], tr, tc] = f[dirs, solid.link_rows, solid.link_cols]
    return out


def _open_rows(solid: SolidMask | None, column: int, height: int) -> NDArray[np.bool_]:
    if solid is None:
        return np.ones(height, dtype=bool)
    return ~solid.mask[:, column]


def inlet_velocity_bc(f: FloatArray, u_in: float, solid: SolidMask | None = None) -> FloatArray:
    """
    Zou-He velocity closure on the inlet column (x = 0): imposes u = u_in, v = 0.

    Density follows from the known populations; f_1, f_5, f_8 are reconstructed.

    Args:
        f (NDArray): Streamed populations, shape (9, H, W).
        u_in (float): Inlet velocity.
        solid (SolidMask | None): Solid nodes of the inlet column are left to bounce-back.

    Returns:
        NDArray: Populations with the inlet closure applied.

    Raises:
        DivergenceError: If the reconstructed density is non-positive.
    """
    out = f.copy()
    rows = _open_rows(solid, 0, f.shape[1])
    col = out[:, rows, 0]
    rho = (col[0] + col[2] + col[4] + 2.0 * (col[3] + col[6] + col[7])) / (1.0 - u_in)
    if np.any(~(rho > 0.0)):
        raise DivergenceError("Inlet closure produced non-positive density")
    ru = rho * u_in
    half_diff = 0.5 * (col[2] - col[4])
    col[1] = col[3] + (2.0 / 3.0) * ru
    col[5] = col[7] - half_diff + ru / 6.0
    col[8] = col[6] + half_diff + ru / 6.0
    out[:, rows, 0] = col
    return out


def outlet_pressure_bc(f: FloatArray, rho_out: float, solid: SolidMask | None = None) -> FloatArray:
    """
    Zou-He pressure closure on the outlet column (x = W-1): imposes rho = rho_out, v = 0.

    The normal velocity follows from the known populations; f_3, f_6, f_7 are reconstructed.

    Args:
        f (NDArray): Streamed populations, shape (9, H, W).
        rho_out (float): Outlet density (pressure c_s² rho_out).
        solid (SolidMask | None): Solid nodes of the outlet column are left to bounce-back.

    Returns:
        NDArray: Populations with the outlet closure applied.

    Raises:
        DivergenceError: If rho_out is non-positive.
    """
    if not rho_out > 0.0:
        raise DivergenceError(f"Outlet closure requires rho_out > 0, got {rho_out}")
    out = f.copy()
    rows = _open_rows(solid, -1, f.shape[1])
    col = out[:, rows, -1]
    ux = -1.0 + (col[0] + col[2] + col[4] + 2.0 * (col[1] + col[5] + col[8])) / rho_out
    ru = rho_out * ux
    half_diff = 0.5 * (col[2] - col[4])
    col[3] = col[1] - (2.0 / 3.0) * ru
    col[7] = col[5] + half_diff - ru / 6.0
    col[6] = col[8] - half_diff - ru / 6.0
    out[:, rows, -1] = col
    return out
