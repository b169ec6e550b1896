# Copyright (c) 2025 CoReason, Inc.
#
# This software is proprietary and dual-licensed.
# Licensed under the Prosperity Public License 3.0 (the "License").
# A copy of the license is available at https://prosperitylicense.com/versions/3.0.0
# For details, see the LICENSE file.
# Commercial use beyond a 30-day trial requires a separate license.
#
# Source Code: https://github.com/CoReason-AI/texflow

from collections.abc import Callable
from pathlib import Path

import numpy as np
import pytest

from texflow.config import load_run_config
from texflow.exceptions import ConfigurationError, DivergenceError
from texflow.lbm.geometry import build_mask
from texflow.lbm.simulator import (
    Simulation,
    extract_profile,
    initial_state,
    is_capture_step,
    observe,
    poiseuille_reference,
    poiseuille_validation,
    run,
    simulate,
    step,
    velocity_magnitude,
)
from texflow.lbm.snapshots import FlowSnapshot, read_manifest, read_snapshot
from texflow.schemas import ChannelSpec, SimulationConfig


def test_rest_state_stays_at_rest() -> None:
    cfg = SimulationConfig(channel=ChannelSpec.smooth(H=8, L=12), periodic_x=True, n_steps=5)
    solid = build_mask(cfg.channel, periodic_x=True)
    f = initial_state(solid)
    for _ in range(5):
        f, macro = step(f, cfg, solid)
    np.testing.assert_allclose(macro.U, 0.0, atol=1e-15)
    np.testing.assert_allclose(macro.rho[solid.fluid], 1.0, atol=1e-14)


def test_snapshot_capture_steps(tiny_sim_cfg: SimulationConfig) -> None:
    times = [snap.t for snap in simulate(tiny_sim_cfg)]
    assert times == [5, 10, 15, 20]
    cfg = tiny_sim_cfg.model_copy(update={"capture_steps": (3, 50)})
    assert is_capture_step(3, cfg) and not is_capture_step(4, cfg)
    assert [snap.t for snap in simulate(cfg)] == [3, 5, 10, 15, 20]


def test_inlet_drives_flow(tiny_sim_cfg: SimulationConfig) -> None:
    snaps = list(simulate(tiny_sim_cfg))
    last = snaps[-1]
    inlet_fluid = ~last.mask[:, 0]
    np.testing.assert_allclose(last.U[inlet_fluid, 0], tiny_sim_cfg.boundary.u_in, atol=1e-6)
    assert np.all(last.U[last.mask] == 0.0)
    assert np.all(last.rho[last.mask] == 1.0)
    assert float(last.U[5, 3]) > 0.0


def test_run_writes_verifiable_manifest(tmp_path: Path, tiny_sim_cfg: SimulationConfig) -> None:
    manifest = run(tiny_sim_cfg, tmp_path / "run")
    assert manifest.completed
    assert [r.t for r in manifest.snapshots] == [5, 10, 15, 20]
    loaded = read_manifest(tmp_path / "run", verify=True)
    assert loaded.config == tiny_sim_cfg
    snap = read_snapshot(tmp_path / "run" / loaded.snapshots[-1].path)
    assert snap.shape == (12, 32)


def test_run_is_deterministic(tmp_path: Path, tiny_sim_cfg: SimulationConfig) -> None:
    run(tiny_sim_cfg, tmp_path / "a")
    run(tiny_sim_cfg, tmp_path / "b")
    for name in ("snap_0000010.txfs", "snap_0000020.txfs"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_divergence_aborts_and_records_manifest(tmp_path: Path, tiny_sim_cfg: SimulationConfig) -> None:
    cfg = tiny_sim_cfg.model_copy(update={"max_speed": 1e-6})
    with pytest.raises(DivergenceError) as excinfo:
        run(cfg, tmp_path / "run")
    assert excinfo.value.timestep == 1
    assert excinfo.value.node is not None
    manifest = read_manifest(tmp_path / "run")
    assert not manifest.completed
    assert manifest.snapshots == []
    assert manifest.error is not None and "t=1" in manifest.error


def test_mass_envelope_trips_divergence(tiny_sim_cfg: SimulationConfig) -> None:
    sim = Simulation(tiny_sim_cfg)
    sim.f = sim.f * 1.2
    sim.macro = observe(sim.f, tiny_sim_cfg, sim.solid)
    with pytest.raises(DivergenceError) as excinfo:
        sim.advance()
    assert excinfo.value.timestep == 1
    assert sim.t == 0


def test_poiseuille_reference() -> None:
    u = poiseuille_reference(10.0, nu=0.1, force=1e-4)
    assert u[0] == 0.0 and u[-1] == 0.0
    assert u[5] == pytest.approx(1e-4 / 0.2 * 25.0)
    by_pressure = poiseuille_reference(10.0, nu=0.1, dp=1e-2, length=100.0)
    np.testing.assert_allclose(by_pressure, u)
    with pytest.raises(ConfigurationError):
        poiseuille_reference(10.0, nu=0.1)
    with pytest.raises(ConfigurationError):
        poiseuille_reference(10.0, nu=0.1, force=1e-4, dp=1.0, length=1.0)
    with pytest.raises(ConfigurationError):
        poiseuille_reference(10.0, nu=0.1, dp=1.0)
    with pytest.raises(ConfigurationError):
        poiseuille_reference(0.0, nu=0.1, force=1e-4)


@pytest.mark.parametrize("tau", [0.6, 0.8, 1.0])
def test_poiseuille_validation_small_channel(tau: float) -> None:
    error = poiseuille_validation(tau, H=16, W=4, max_steps=30000, check_every=200, tol=1e-8)
    assert error < 0.02


@pytest.mark.slow
@pytest.mark.parametrize("tau", [0.6, 0.8, 1.0])
def test_poiseuille_validation_full_channel(tau: float) -> None:
    assert poiseuille_validation(tau) < 0.02


def test_poiseuille_validation_extrapolates_the_slow_mode() -> None:
    # From rest the tau=0.6 profile on 48 fluid rows is still ~6% short of steady state after 20000 steps.
    error = poiseuille_validation(0.6, H=50, W=4, max_steps=20000)
    assert error < 0.02


def test_extract_profile(make_snapshot: Callable[..., FlowSnapshot]) -> None:
    snap = make_snapshot(height=8, width=40)
    y, u = extract_profile(snap, 0.5)
    np.testing.assert_array_equal(y, np.arange(8))
    np.testing.assert_allclose(u, snap.U[:, 20])
    assert u[0] == 0.0 and u[-1] == 0.0
    _, last = extract_profile(snap, 1.0)
    np.testing.assert_allclose(last, snap.U[:, 39])
    with pytest.raises(ConfigurationError):
        extract_profile(snap, 1.5)


def test_velocity_magnitude(make_snapshot: Callable[..., FlowSnapshot]) -> None:
    snap = make_snapshot(height=8, width=40)
    speed = velocity_magnitude(snap)
    assert speed.shape == (8, 40)
    np.testing.assert_allclose(speed, np.hypot(snap.U, snap.V))
    assert np.all(speed[0] == 0.0)


def test_force_driven_centerline_grows_monotonically() -> None:
    height, u_max, tau = 18, 0.02, 0.8
    nu = (tau - 0.5) / 3.0
    force = 8.0 * nu * u_max / (height - 2) ** 2
    cfg = SimulationConfig(
        channel=ChannelSpec.smooth(H=height, L=4), tau=tau, force=(force, 0.0), n_steps=600, periodic_x=True
    )
    sim = Simulation(cfg)
    centre = [float(sim.advance().U[height // 2, 2]) for _ in range(cfg.n_steps)]
    assert np.all(np.diff(centre) > -1e-12 * u_max)
    assert centre[-1] > 0.5 * u_max
    assert max(centre) < 1.02 * u_max


@pytest.mark.slow
def test_paper_preset_stays_in_the_velocity_envelope() -> None:
    cfg = load_run_config(preset="paper").simulation.model_copy(update={"snapshot_stride": 100})
    assert (cfg.channel.H, cfg.channel.L, cfg.n_steps) == (100, 1000, 1000)
    peak = 0.0
    for snap in simulate(cfg):
        speed = velocity_magnitude(snap)
        assert np.all(np.isfinite(speed))
        peak = max(peak, float(speed.max()))
    assert 0.0 < peak <= 0.1
