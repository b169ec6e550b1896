# Copyright (c) 2025 CoReason, Inc.
#
# This software is proprietary and dual-licensed.
# Licensed under the Prosperity Public License 3.0 (the "License").
# A copy of the license is available at https://prosperitylicense.com/versions/3.0.0
# For details, see the LICENSE file.
# Commercial use beyond a 30-day trial requires a separate license.
#
# Source Code: https://github.com/CoReason-AI/texflow

import numpy as np
import pytest

from texflow.exceptions import ConfigurationError, DivergenceError, DomainError
from texflow.lbm.core import (
    D2Q9,
    apply_force_shift,
    collide,
    compute_moments,
    equilibrium,
    guo_source,
    stream,
)
from texflow.utils.logger import logger


def _random_state(rng: np.random.Generator, shape: tuple[int, ...]) -> np.ndarray:
    rho = rng.uniform(0.9, 1.1, shape)
    u = rng.uniform(-0.05, 0.05, shape)
    v = rng.uniform(-0.05, 0.05, shape)
    return equilibrium(rho, (u, v)) * rng.uniform(0.95, 1.05, (9,) + shape)


def test_velocity_set() -> None:
    assert D2Q9.w.sum() == pytest.approx(1.0, abs=1e-15)
    for p in range(9):
        np.testing.assert_array_equal(D2Q9.e[D2Q9.opposite[p]], -D2Q9.e[p])
    assert D2Q9.cs2 == pytest.approx(1.0 / 3.0)


def test_equilibrium_at_rest() -> None:
    feq = equilibrium(1.3, (0.0, 0.0))
    np.testing.assert_allclose(feq, 1.3 * D2Q9.w, atol=1e-15)


def test_equilibrium_moments(rng: np.random.Generator) -> None:
    rho = rng.uniform(0.8, 1.2, (5, 7))
    u = rng.uniform(-0.05, 0.05, (5, 7))
    v = rng.uniform(-0.05, 0.05, (5, 7))
    feq = equilibrium(rho, (u, v))
    assert feq.shape == (9, 5, 7)
    macro = compute_moments(feq)
    np.testing.assert_allclose(macro.rho, rho, atol=1e-14)
    np.testing.assert_allclose(macro.u, u, atol=1e-14)
    np.testing.assert_allclose(macro.v, v, atol=1e-14)


def test_equilibrium_rejects_non_positive_density() -> None:
    with pytest.raises(DomainError):
        equilibrium(np.array([1.0, 0.0]), (np.zeros(2), np.zeros(2)))


def test_equilibrium_warns_above_low_mach_limit() -> None:
    messages: list[str] = []
    sink = logger.add(lambda m: messages.append(str(m)), level="WARNING")
    try:
        equilibrium(1.0, (0.3, 0.0))
    finally:
        logger.remove(sink)
    assert any("0.3 c_s" in m for m in messages)


def test_collide_conserves_mass_and_momentum(rng: np.random.Generator) -> None:
    f = _random_state(rng, (1000,))
    macro = compute_moments(f)
    feq = equilibrium(macro.rho, (macro.u, macro.v))
    post = collide(f, feq, tau=0.7)
    after = compute_moments(post)
    np.testing.assert_allclose(after.rho, macro.rho, atol=1e-12)
    np.testing.assert_allclose(after.rho * after.u, macro.rho * macro.u, atol=1e-12)
    np.testing.assert_allclose(after.rho * after.v, macro.rho * macro.v, atol=1e-12)


def test_collide_fixed_point_and_tau_one(rng: np.random.Generator) -> None:
    feq = equilibrium(1.0, (0.01, 0.02)) * np.ones((9, 3, 3))
    np.testing.assert_allclose(collide(feq, feq, tau=0.9), feq)
    f = _random_state(rng, (3, 3))
    np.testing.assert_allclose(collide(f, feq, tau=1.0), feq, atol=1e-15)


@pytest.mark.parametrize("tau", [0.5, 0.3])
def test_collide_rejects_unstable_tau(tau: float) -> None:
    f = equilibrium(1.0, (0.0, 0.0))
    with pytest.raises(ConfigurationError):
        collide(f, f, tau)


def test_stream_moves_populations_along_their_velocity() -> None:
    f = np.zeros((9, 5, 6))
    f[1, 2, 3] = 1.0
    f[2, 2, 3] = 2.0
    f[7, 2, 3] = 3.0
    out = stream(f)
    assert out[1, 2, 4] == 1.0
    assert out[2, 3, 3] == 2.0
    assert out[7, 1, 2] == 3.0
    assert out.sum() == 6.0


def test_stream_is_periodic_and_conservative(rng: np.random.Generator) -> None:
    f = _random_state(rng, (6, 8))
    out = stream(f)
    np.testing.assert_allclose(out.sum(axis=(1, 2)), f.sum(axis=(1, 2)), rtol=0, atol=1e-12)
    f_edge = np.zeros((9, 4, 4))
    f_edge[1, 0, 3] = 1.0
    assert stream(f_edge)[1, 0, 0] == 1.0


def test_compute_moments_solid_nodes() -> None:
    f = equilibrium(1.2, (0.03, 0.0)) * np.ones((9, 3, 4))
    solid = np.zeros((3, 4), dtype=bool)
    solid[0, :] = True
    macro = compute_moments(f, solid=solid)
    np.testing.assert_array_equal(macro.rho[0], 1.0)
    np.testing.assert_array_equal(macro.u[0], 0.0)
    np.testing.assert_allclose(macro.rho[1:], 1.2)
    np.testing.assert_allclose(macro.u[1:], 0.03)
    np.testing.assert_allclose(macro.p, macro.rho / 3.0)


def test_compute_moments_reports_offending_node() -> None:
    f = equilibrium(1.0, (0.0, 0.0)) * np.ones((9, 3, 4))
    f[:, 1, 2] = 0.0
    with pytest.raises(DivergenceError) as excinfo:
        compute_moments(f)
    assert excinfo.value.node == (1, 2)
    f[:, 1, 2] = np.nan
    with pytest.raises(DivergenceError):
        compute_moments(f)


def test_compute_moments_ignores_empty_solid_nodes() -> None:
    f = equilibrium(1.0, (0.0, 0.0)) * np.ones((9, 3, 4))
    f[:, 0, :] = 0.0
    solid = np.zeros((3, 4), dtype=bool)
    solid[0, :] = True
    compute_moments(f, solid=solid)


def test_guo_source_moments(rng: np.random.Generator) -> None:
    U = rng.uniform(-0.05, 0.05, (4, 5))
    V = rng.uniform(-0.05, 0.05, (4, 5))
    force = (1e-4, -3e-5)
    src = guo_source(force, U, V)
    np.testing.assert_allclose(src.sum(axis=0), 0.0, atol=1e-18)
    fx = np.tensordot(D2Q9.ex.astype(float), src, axes=(0, 0))
    fy = np.tensordot(D2Q9.ey.astype(float), src, axes=(0, 0))
    np.testing.assert_allclose(fx, force[0], rtol=1e-12)
    np.testing.assert_allclose(fy, force[1], rtol=1e-12)


def test_apply_force_shift() -> None:
    f = equilibrium(2.0, (0.01, 0.0)) * np.ones((9, 2, 2))
    macro = compute_moments(f)
    shifted = apply_force_shift(macro, (0.004, 0.002))
    np.testing.assert_allclose(shifted.U, 0.01 + 0.004 / 4.0)
    np.testing.assert_allclose(shifted.V, 0.002 / 4.0)
    np.testing.assert_allclose(shifted.u, macro.u)


def test_apply_force_shift_keeps_solids_at_rest() -> None:
    f = equilibrium(1.0, (0.0, 0.0)) * np.ones((9, 2, 2))
    solid = np.array([[True, False], [False, False]])
    shifted = apply_force_shift(compute_moments(f, solid=solid), (0.01, 0.0), solid=solid)
    assert shifted.U[0, 0] == 0.0
    assert shifted.U[1, 1] == pytest.approx(0.005)
