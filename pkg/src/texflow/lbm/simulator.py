# Copyright (c) 2025 CoReason, Inc.
#
# This software is proprietary and dual-licensed.
# Licensed under the Prosperity Public License 3.0 (the "License").
# A copy of the license is available at https://prosperitylicense.com/versions/3.0.0
# For details, see the LICENSE file.
# Commercial use beyond a 30-day trial requires a separate license.
#
# Source Code: https://github.com/CoReason-AI/texflow

import time
from collections.abc import Iterator
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
from numpy.typing import NDArray

from texflow import __version__
from texflow.exceptions import ConfigurationError, DivergenceError
from texflow.lbm.core import (
    D2Q9,
    D2Q9Model,
    FloatArray,
    MacroscopicFields,
    apply_force_shift,
    collide,
    compute_moments,
    equilibrium,
    guo_source,
    stream,
)
from texflow.lbm.geometry import SolidMask, bounce_back, build_mask, inlet_velocity_bc, outlet_pressure_bc
from texflow.lbm.snapshots import FlowSnapshot, snapshot_record, write_manifest, write_snapshot
from texflow.schemas import ChannelSpec, RunManifest, SimulationConfig
from texflow.utils.logger import logger

"""
LBM time loop for the textured channel: stepping, snapshot capture and analytic references.
"""

# Total fluid mass may drift through the open boundaries, but not by more than this fraction.
MASS_TOLERANCE = 0.05


def initial_state(solid: SolidMask, model: D2Q9Model = D2Q9) -> FloatArray:
    """Equilibrium populations at rest with unit density on every node."""
    height, width = solid.shape
    return equilibrium(np.ones((height, width)), (np.zeros((height, width)), np.zeros((height, width))), model)


def _has_force(cfg: SimulationConfig) -> bool:
    return cfg.force[0] != 0.0 or cfg.force[1] != 0.0


def observe(
    f: FloatArray, cfg: SimulationConfig, solid: SolidMask, model: D2Q9Model = D2Q9
) -> MacroscopicFields:
    """
    Moments of a state with the force correction and the divergence checks applied.

    Raises:
        DivergenceError: On non-finite fields, rho <= 0 or |U| above `cfg.max_speed` at a fluid node.
    """
    macro = compute_moments(f, model, solid=solid.mask)
    macro = apply_force_shift(macro, cfg.force, model.dt, solid=solid.mask)
    fluid = solid.fluid
    speed2 = macro.U * macro.U + macro.V * macro.V
    bad = fluid & ~(np.isfinite(speed2) & (speed2 <= cfg.max_speed**2))
    if np.any(bad):
        row, col = (int(i) for i in np.argwhere(bad)[0])
        raise DivergenceError(
            f"Velocity {np.sqrt(speed2[row, col])} exceeds {cfg.max_speed} at node ({row}, {col})", node=(row, col)
        )
    return macro


def step(
    f: FloatArray,
    cfg: SimulationConfig,
    solid: SolidMask | None = None,
    model: D2Q9Model = D2Q9,
    macro: MacroscopicFields | None = None,
) -> tuple[FloatArray, MacroscopicFields]:
    """
    One full update of the lattice.

    moments -> equilibrium -> collide (Guo forcing) -> bounce-back -> stream
    -> inlet/outlet closures -> moments with force shift.

    Args:
        f (NDArray): Current populations, shape (9, H, W).
        cfg (SimulationConfig): Solver parameters.
        solid (SolidMask | None): Geometry; built from `cfg.channel` when omitted.
        model (D2Q9Model): Velocity set.
        macro (MacroscopicFields | None): Fields of `f` from the previous step, recomputed when omitted.

    Returns:
        tuple[NDArray, MacroscopicFields]: The new populations and their macroscopic fields.

    Raises:
        DivergenceError: If the state blows up.
    """
    if solid is None:
        solid = build_mask(cfg.channel, periodic_x=cfg.periodic_x, model=model)
    if macro is None:
        macro = observe(f, cfg, solid, model)
    feq = equilibrium(macro.rho, (macro.U, macro.V), model)
    source = guo_source(cfg.force, macro.U, macro.V, model) if _has_force(cfg) else None
    post = collide(f, feq, cfg.tau, source)
    post = bounce_back(post, solid, model)
    f_next = stream(post, model)
    if not cfg.periodic_x:
        f_next = inlet_velocity_bc(f_next, cfg.boundary.u_in, solid)
        f_next = outlet_pressure_bc(f_next, cfg.boundary.rho_out, solid)
    return f_next, observe(f_next, cfg, solid, model)


def make_snapshot(t: int, macro: MacroscopicFields, solid: SolidMask) -> FlowSnapshot:
    return FlowSnapshot(
        t=t,
        rho=macro.rho.copy(),
        p=macro.p.copy(),
        U=np.where(solid.mask, 0.0, macro.U),
        V=np.where(solid.mask, 0.0, macro.V),
        mask=solid.mask.copy(),
    )


def is_capture_step(t: int, cfg: SimulationConfig) -> bool:
    return t % cfg.snapshot_stride == 0 or t in cfg.capture_steps


class Simulation:
    """
    Stateful driver of one run.

    Attributes:
        cfg (SimulationConfig): Solver parameters.
        solid (SolidMask): Rasterized geometry.
        f (NDArray): Current populations.
        t (int): Steps taken so far.
    """

    def __init__(self, cfg: SimulationConfig, model: D2Q9Model = D2Q9) -> None:
        self.cfg = cfg
        self.model = model
        self.solid = build_mask(cfg.channel, periodic_x=cfg.periodic_x, model=model)
        self.f = initial_state(self.solid, model)
        self.t = 0
        self.initial_mass = float(self.f[:, self.solid.fluid].sum())
        self.macro = observe(self.f, cfg, self.solid, model)

    def advance(self) -> MacroscopicFields:
        """
        Takes one step and checks the global mass envelope.

        Raises:
            DivergenceError: Annotated with the timestep at which the run failed.
        """
        try:
            f_next, macro = step(self.f, self.cfg, self.solid, self.model, macro=self.macro)
            mass = float(f_next[:, self.solid.fluid].sum())
            if abs(mass - self.initial_mass) > MASS_TOLERANCE * self.initial_mass:
                raise DivergenceError(f"Total mass {mass:.6g} left the ±5% envelope around {self.initial_mass:.6g}")
        except DivergenceError as e:
            raise e.at_timestep(self.t + 1) from e
        self.f, self.macro = f_next, macro
        self.t += 1
        return macro

    def snapshot(self) -> FlowSnapshot:
        return make_snapshot(self.t, self.macro, self.solid)


def simulate(cfg: SimulationConfig, model: D2Q9Model = D2Q9) -> Iterator[FlowSnapshot]:
    """
    Advances `cfg.n_steps` steps from rest, yielding snapshots at capture steps.

    Snapshots are emitted every `snapshot_stride` steps and at the fixed capture set
    (5, 50, 100, 500, 1000) when within range.

    Args:
        cfg (SimulationConfig): Solver parameters.
        model (D2Q9Model): Velocity set.

    Yields:
        FlowSnapshot: Copies of the fields at each capture step.

    Raises:
        ConfigurationError: If n_steps < 1.
        DivergenceError: If the run blows up; snapshots already yielded stay valid.
    """
    if cfg.n_steps < 1:
        raise ConfigurationError("n_steps must be at least 1")
    sim = Simulation(cfg, model)
    for _ in range(cfg.n_steps):
        sim.advance()
        if sim.t % cfg.log_every == 0:
            speed = np.sqrt(sim.macro.U**2 + sim.macro.V**2)
            logger.info(f"Step {sim.t}/{cfg.n_steps}: max |U| = {float(speed.max()):.5f}")
        if is_capture_step(sim.t, cfg):
            yield sim.snapshot()


def snapshot_filename(t: int) -> str:
    return f"snap_{t:07d}.txfs"


def run(cfg: SimulationConfig, out_dir: str | Path, model: D2Q9Model = D2Q9) -> RunManifest:
    """
    Runs a simulation, writing every snapshot and the run manifest to `out_dir`.

    Args:
        cfg (SimulationConfig): Solver parameters.
        out_dir (str | Path): Run directory.
        model (D2Q9Model): Velocity set.

    Returns:
        RunManifest: The completed manifest.

    Raises:
        DivergenceError: After writing a manifest that records the last valid snapshot.
    """
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(
        config=cfg, solver_version=__version__, created_at=datetime.now(timezone.utc).isoformat()
    )
    started = time.perf_counter()
    steps_done = 0
    try:
        for snap in simulate(cfg, model):
            name = snapshot_filename(snap.t)
            write_snapshot(root / name, snap)
            manifest.snapshots.append(snapshot_record(snap, name))
            logger.debug(f"Captured t={snap.t}: max |U| = {float(velocity_magnitude(snap).max()):.5f}")
            steps_done = snap.t
        steps_done = cfg.n_steps
    except DivergenceError as e:
        manifest.completed = False
        manifest.error = str(e)
        steps_done = e.timestep or steps_done
        last_t = manifest.snapshots[-1].t if manifest.snapshots else None
        logger.error(f"Run diverged: {e}; last valid snapshot t={last_t}")
        raise
    finally:
        elapsed = time.perf_counter() - started
        manifest.seconds_per_step = elapsed / max(steps_done, 1)
        write_manifest(root, manifest)
    logger.info(f"Run complete: {len(manifest.snapshots)} snapshots in {elapsed:.1f}s")
    return manifest


def extract_profile(snap: FlowSnapshot, x_over_L: float) -> tuple[NDArray[np.int64], NDArray[np.floating]]:
    """
    Streamwise velocity along the column nearest x/L, bottom to top.

    Args:
        snap (FlowSnapshot): Source fields.
        x_over_L (float): Relative streamwise position in [0, 1].

    Returns:
        tuple[NDArray, NDArray]: Row indices y and U(y); solid entries are exactly 0.

    Raises:
        ConfigurationError: If x_over_L is outside [0, 1].
    """
    return profile_at(snap.U, snap.mask, x_over_L)


def profile_at(
    field: NDArray[np.floating], mask: NDArray[np.bool_] | None, x_over_L: float
) -> tuple[NDArray[np.int64], NDArray[np.floating]]:
    """Column of `field` nearest x/L with solid entries set to 0; see `extract_profile`."""
    if not 0.0 <= x_over_L <= 1.0:
        raise ConfigurationError(f"x/L must lie in [0, 1], got {x_over_L}")
    height, width = field.shape
    col = int(np.clip(np.rint(x_over_L * width), 0, width - 1))
    values = np.asarray(field[:, col], dtype=np.float64)
    if mask is not None:
        values = np.where(mask[:, col], 0.0, values)
    return np.arange(height), values


def velocity_magnitude(snap: FlowSnapshot) -> NDArray[np.floating]:
    return np.sqrt(np.asarray(snap.U, dtype=np.float64) ** 2 + np.asarray(snap.V, dtype=np.float64) ** 2)


def poiseuille_reference(
    H_fluid: float,
    nu: float,
    force: float | None = None,
    dp: float | None = None,
    length: float | None = None,
    rho: float = 1.0,
    y: NDArray[np.floating] | None = None,
) -> NDArray[np.float64]:
    """
    Analytic plane Poiseuille profile u(y) = g/(2 nu) y (H_fluid - y).

    The drive is either a body force (g = F/rho) or a pressure drop over a length (g = dp/(rho L)).

    Args:
        H_fluid (float): Wall-to-wall distance.
        nu (float): Kinematic viscosity.
        force (float | None): Streamwise body force.
        dp (float | None): Pressure drop across `length`.
        length (float | None): Channel length of the pressure drop.
        rho (float): Density.
        y (NDArray | None): Wall-normal positions; defaults to 0..H_fluid in unit steps.

    Returns:
        NDArray: Velocity at each y.

    Raises:
        ConfigurationError: On non-positive inputs or an ambiguous drive.
    """
    if H_fluid <= 0 or nu <= 0 or rho <= 0:
        raise ConfigurationError("Poiseuille reference requires positive H_fluid, nu and rho")
    if (force is None) == (dp is None):
        raise ConfigurationError("Specify exactly one drive: force or dp")
    if force is not None:
        g = force / rho
    else:
        if not length or length <= 0:
            raise ConfigurationError("A pressure drive needs a positive length")
        g = float(dp) / (rho * length)
    ys = np.arange(0.0, H_fluid + 0.5) if y is None else np.asarray(y, dtype=np.float64)
    return g / (2.0 * nu) * ys * (H_fluid - ys)


def poiseuille_validation(
    tau: float,
    H: int = 50,
    W: int = 200,
    u_max: float = 0.05,
    max_steps: int = 60000,
    check_every: int = 500,
    tol: float = 1e-7,
    rate_tol: float = 1e-5,
) -> float:
    """
    Body-force-driven smooth periodic channel run to steady state, compared with the analytic parabola.

    Walls are rows 0 and H-1; with halfway bounce-back they sit half a node inside, so the
    fluid width is H - 2 and fluid row j lies at y = j - 1/2.

    From rest the profile approaches steady state through its slowest shear mode, whose
    amplitude shrinks by a constant ratio per check once faster modes have died out. When two
    successive ratios agree within `rate_tol`, the remaining geometric series is summed to
    obtain the steady profile (Aitken extrapolation). A profile that stops changing by
    more than `tol` per check is taken as converged as is.

    Args:
        tau (float): Relaxation time under test.
        H (int): Grid height including the wall rows.
        W (int): Grid width (periodic).
        u_max (float): Target centreline velocity used to size the body force.
        max_steps (int): Step budget.
        check_every (int): Steps between convergence checks.
        tol (float): Relative profile change per check below which the run counts as converged.
        rate_tol (float): Agreement of successive decay ratios that triggers extrapolation.

    Returns:
        float: Relative L2 error of the mid-column steady profile.
    """
    h_fluid = H - 2
    nu = D2Q9.cs2 * (tau - 0.5)
    force = 8.0 * nu * u_max / h_fluid**2
    cfg = SimulationConfig(
        channel=ChannelSpec.smooth(H=H, L=W),
        tau=tau,
        force=(force, 0.0),
        n_steps=max_steps,
        periodic_x=True,
    )
    sim = Simulation(cfg)
    col = W // 2
    previous = sim.macro.U[1:-1, col].copy()
    steady = previous
    last_delta: NDArray[np.float64] | None = None
    last_ratio: float | None = None
    while sim.t < max_steps:
        for _ in range(check_every):
            sim.advance()
        current = sim.macro.U[1:-1, col].astype(np.float64)
        delta = current - previous
        previous = steady = current
        change = float(np.linalg.norm(delta) / max(np.linalg.norm(current), 1e-30))
        if change < tol:
            break
        if last_delta is not None:
            ratio = float(np.linalg.norm(delta) / max(np.linalg.norm(last_delta), 1e-30))
            if 0.0 < ratio < 1.0 and last_ratio is not None and abs(ratio - last_ratio) < rate_tol:
                steady = current + delta * ratio / (1.0 - ratio)
                logger.debug(f"Poiseuille tau={tau}: decay ratio {ratio:.6f} per {check_every} steps, extrapolating")
                break
            last_ratio = ratio
        last_delta = delta
    y = np.arange(1, H - 1) - 0.5
    reference = poiseuille_reference(h_fluid, nu, force=force, y=y)
    error = float(np.linalg.norm(steady - reference) / np.linalg.norm(reference))
    logger.info(f"Poiseuille tau={tau}: relative L2 error {error:.4%} after {sim.t} steps")
    return error
