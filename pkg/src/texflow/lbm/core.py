# Copyright (c) 2025 CoReason, Inc.
#
# This software is proprietary and dual-licensed.
# Licensed under the Prosperity Public License 3.0 (the "License").
# A copy of the license is available at https://prosperitylicense.com/versions/3.0.0
# For details, see the LICENSE file.
# Commercial use beyond a 30-day trial requires a separate license.
#
# Source Code: https://github.com/CoReason-AI/texflow

from dataclasses import dataclass, field, replace

import numpy as np
from numpy.typing import NDArray

from texflow.exceptions import ConfigurationError, DivergenceError, DomainError
from texflow.utils.logger import logger

"""
D2Q9 kernel: equilibrium, BGK collision, streaming, moments and the force-induced velocity shift.

Direction ordering:

    6   2   5
      \\ | /
    3 - 0 - 1
      / | \\
    7   4   8

Fields are stored direction-major, f[p, row, col], with rows along +y (row 0 at the bottom wall)
and columns along +x (column 0 at the inlet).
"""

FloatArray = NDArray[np.float64]


@dataclass(frozen=True)
class D2Q9Model:
    """
    The D2Q9 velocity set in lattice units.

    Attributes:
        e (NDArray): Integer velocities, shape (9, 2), as (e_x, e_y).
        w (NDArray): Quadrature weights, shape (9,).
        opposite (NDArray): Index of the reversed direction for every p.
        dx (float): Lattice spacing.
        dt (float): Timestep.
    """

    e: NDArray[np.int64] = field(
        default_factory=lambda: np.array(
            [[0, 0], [1, 0], [0, 1], [-1, 0], [0, -1], [1, 1], [-1, 1], [-1, -1], [1, -1]], dtype=np.int64
        )
    )
    w: FloatArray = field(
        default_factory=lambda: np.array([4 / 9] + [1 / 9] * 4 + [1 / 36] * 4, dtype=np.float64)
    )
    opposite: NDArray[np.int64] = field(default_factory=lambda: np.array([0, 3, 4, 1, 2, 7, 8, 5, 6], dtype=np.int64))
    dx: float = 1.0
    dt: float = 1.0

    @property
    def c(self) -> float:
        return self.dx / self.dt

    @property
    def cs(self) -> float:
        return self.c / np.sqrt(3.0)

    @property
    def cs2(self) -> float:
        return self.c * self.c / 3.0

    @property
    def ex(self) -> NDArray[np.int64]:
        return self.e[:, 0]

    @property
    def ey(self) -> NDArray[np.int64]:
        return self.e[:, 1]


D2Q9 = D2Q9Model()


@dataclass(frozen=True)
class MacroscopicFields:
    """
    Moments of a distribution field.

    Attributes:
        rho (NDArray): Density.
        u, v (NDArray): Velocity from the first moment, before the force correction.
        U, V (NDArray): Force-corrected velocity; equal to (u, v) when no force acts.
        p (NDArray): Pressure of the ideal lattice gas, c_s² rho.
    """

    rho: FloatArray
    u: FloatArray
    v: FloatArray
    U: FloatArray
    V: FloatArray
    p: FloatArray


def _velocity_components(u: object) -> tuple[FloatArray, FloatArray]:
    ux, uy = u  # type: ignore[misc]
    return np.asarray(ux, dtype=np.float64), np.asarray(uy, dtype=np.float64)


def equilibrium(rho: float | FloatArray, u: object, model: D2Q9Model = D2Q9) -> FloatArray:
    """
    Second-order equilibrium populations.

    f_p^eq = rho w_p [1 + (e_p.u)/c_s² + (e_p.u)²/(2 c_s⁴) - u²/(2 c_s²)]

    Args:
        rho (float | NDArray): Density, scalar or field.
        u (2-vector or (2, ...) array): Velocity components (u_x, u_y), broadcastable against rho.
        model (D2Q9Model): Velocity set.

    Returns:
        NDArray: Populations of shape (9,) + broadcast shape.

    Raises:
        DomainError: If any density is non-positive.
    """
    rho_arr = np.asarray(rho, dtype=np.float64)
    if np.any(rho_arr <= 0.0):
        raise DomainError("equilibrium requires rho > 0")
    ux, uy = _velocity_components(u)
    speed2 = ux * ux + uy * uy
    if np.any(speed2 > (0.3 * model.cs) ** 2):
        logger.warning(f"Velocity {float(np.sqrt(speed2.max())):.4f} exceeds 0.3 c_s; low-Mach expansion degrades")
    cs2 = model.cs2
    shape = np.broadcast_shapes(rho_arr.shape, ux.shape, uy.shape)
    feq = np.empty((9,) + shape, dtype=np.float64)
    base = 1.0 - speed2 / (2.0 * cs2)
    for p in range(9):
        eu = model.ex[p] * ux + model.ey[p] * uy
        feq[p] = rho_arr * model.w[p] * (base + eu / cs2 + eu * eu / (2.0 * cs2 * cs2))
    return feq


def compute_moments(
    f: FloatArray,
    model: D2Q9Model = D2Q9,
    solid: NDArray[np.bool_] | None = None,
    solid_density: float = 1.0,
) -> MacroscopicFields:
    """
    Density, velocity and pressure from a distribution field.

    Solid nodes (when a mask is given) hold ghost populations; they report
    `solid_density` and zero velocity.

    Args:
        f (NDArray): Populations, shape (9, H, W).
        model (D2Q9Model): Velocity set.
        solid (NDArray | None): Boolean (H, W) mask, True on solid nodes.
        solid_density (float): Density reported at solid nodes.

    Returns:
        MacroscopicFields: rho, u, v with U = u, V = v (no force applied) and p.

    Raises:
        DivergenceError: If a fluid node has rho <= 0 or a non-finite density.
    """
    rho = f.sum(axis=0)
    fluid = np.ones(rho.shape, dtype=bool) if solid is None else ~solid
    bad = fluid & ~(rho > 0.0)
    if np.any(bad):
        row, col = (int(i) for i in np.argwhere(bad)[0])
        raise DivergenceError(f"Non-positive density {rho[row, col]} at node ({row}, {col})", node=(row, col))
    mx = np.tensordot(model.ex.astype(np.float64), f, axes=(0, 0))
    my = np.tensordot(model.ey.astype(np.float64), f, axes=(0, 0))
    if solid is not None:
        rho = np.where(solid, solid_density, rho)
        mx = np.where(solid, 0.0, mx)
        my = np.where(solid, 0.0, my)
    u = mx / rho
    v = my / rho
    return MacroscopicFields(rho=rho, u=u, v=v, U=u, V=v, p=model.cs2 * rho)


def collide(f: FloatArray, feq: FloatArray, tau: float, source: FloatArray | None = None) -> FloatArray:
    """
    BGK relaxation toward equilibrium, with an optional Guo forcing source.

    f_out = f - (f - feq)/tau + (1 - 1/(2 tau)) S

    Args:
        f (NDArray): Populations, shape (9, H, W).
        feq (NDArray): Equilibrium populations of the same shape.
        tau (float): Relaxation time.
        source (NDArray | None): Forcing term from `guo_source`.

    Returns:
        NDArray: Post-collision populations.

    Raises:
        ConfigurationError: If tau <= 0.5.
    """
    if not tau > 0.5:
        raise ConfigurationError(f"BGK collision requires tau > 0.5, got {tau}")
    out = f - (f - feq) / tau
    if source is not None:
        out += (1.0 - 0.5 / tau) * source
    return out


def guo_source(force: tuple[float, float], U: FloatArray, V: FloatArray, model: D2Q9Model = D2Q9) -> FloatArray:
    """
    Guo discrete forcing term evaluated at the force-corrected velocity.

    S_p = w_p [(e_p - U)/c_s² + (e_p.U) e_p / c_s⁴] . F

    Args:
        force (tuple[float, float]): Body force (F_x, F_y).
        U, V (NDArray): Force-corrected velocity components.
        model (D2Q9Model): Velocity set.

    Returns:
        NDArray: Source of shape (9,) + U.shape.
    """
    fx, fy = force
    cs2 = model.cs2
    src = np.empty((9,) + U.shape, dtype=np.float64)
    for p in range(9):
        ex, ey = float(model.ex[p]), float(model.ey[p])
        eu = ex * U + ey * V
        gx = (ex - U) / cs2 + eu * ex / (cs2 * cs2)
        gy = (ey - V) / cs2 + eu * ey / (cs2 * cs2)
        src[p] = model.w[p] * (gx * fx + gy * fy)
    return src


def stream(f: FloatArray, model: D2Q9Model = D2Q9) -> FloatArray:
    """
    Shifts every direction plane by its lattice velocity: f_p(x + e_p) <- f_p(x).

    The shift wraps at the borders; populations that wrapped into the inlet
    and outlet columns are overwritten by the open-boundary closures.

    Args:
        f (NDArray): Populations, shape (9, H, W).
        model (D2Q9Model): Velocity set.

    Returns:
        NDArray: Streamed populations.
    """
    out = np.empty_like(f)
    for p in range(9):
        out[p] = np.roll(f[p], shift=(int(model.ey[p]), int(model.ex[p])), axis=(0, 1))
    return out


def apply_force_shift(
    macro: MacroscopicFields,
    force: tuple[float, float],
    dt: float = 1.0,
    solid: NDArray[np.bool_] | None = None,
) -> MacroscopicFields:
    """
    Physical velocity under a body force: U = u + F dt / (2 rho).

    Args:
        macro (MacroscopicFields): Moments whose (u, v) are shifted.
        force (tuple[float, float]): Body force (F_x, F_y).
        dt (float): Timestep.
        solid (NDArray | None): Solid nodes keep U = V = 0.

    Returns:
        MacroscopicFields: Copy with U and V replaced.

    Raises:
        DomainError: If any density is non-positive.
    """
    if np.any(macro.rho <= 0.0):
        raise DomainError("force shift requires rho > 0")
    fx, fy = force
    U = macro.u + fx * dt / (2.0 * macro.rho)
    V = macro.v + fy * dt / (2.0 * macro.rho)
    if solid is not None:
        U = np.where(solid, 0.0, U)
        V = np.where(solid, 0.0, V)
    return replace(macro, U=U, V=V)
