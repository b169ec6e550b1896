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

from texflow.exceptions import DivergenceError
from texflow.lbm.core import D2Q9, collide, compute_moments, equilibrium, stream
from texflow.lbm.geometry import (
    SolidMask,
    bounce_back,
    boundary_links,
    build_mask,
    expected_solid_count,
    inlet_velocity_bc,
    outlet_pressure_bc,
    texture_columns,
)
from texflow.schemas import ChannelSpec


def test_smooth_channel_has_only_wall_rows() -> None:
    solid = build_mask(ChannelSpec.smooth(H=6, L=10))
    assert solid.shape == (6, 10)
    assert solid.mask[0].all() and solid.mask[-1].all()
    assert not solid.mask[1:-1].any()
    assert int(solid.mask.sum()) == expected_solid_count(ChannelSpec.smooth(H=6, L=10))


def test_textured_channel_layout(tiny_spec: ChannelSpec) -> None:
    solid = build_mask(tiny_spec)
    assert texture_columns(tiny_spec) == [(2, 6), (10, 14), (18, 22), (26, 30)]
    assert solid.mask[1:3, 2:6].all()
    assert solid.mask[9:11, 2:6].all()
    assert not solid.mask[3:9, :].any()
    assert not solid.mask[1:3, 6:10].any()
    assert int(solid.mask.sum()) == expected_solid_count(tiny_spec)


def test_paper_scale_geometry_solid_count() -> None:
    spec = ChannelSpec.paper()
    solid = build_mask(spec)
    assert solid.shape == (100, 1000)
    assert int(solid.mask.sum()) == expected_solid_count(spec)
    assert texture_columns(spec)[0] == (100, 140)


def test_last_texture_is_clipped_at_outlet() -> None:
    spec = ChannelSpec(L=30, H=10, h=2, w=8, s=4, offset=25)
    assert texture_columns(spec) == [(25, 30)]
    solid = build_mask(spec)
    assert solid.mask[1:3, 25:30].all()
    assert int(solid.mask.sum()) == 2 * 30 + 2 * 2 * 5


def test_boundary_link_counts_smooth_channel() -> None:
    mask = np.zeros((4, 3), dtype=bool)
    mask[0, :] = True
    mask[-1, :] = True
    rows, cols, dirs = boundary_links(mask)
    assert len(rows) == 14
    assert set(dirs[rows == 1].tolist()) == {4, 7, 8}
    assert set(dirs[rows == 2].tolist()) == {2, 5, 6}
    periodic = SolidMask.from_array(mask, periodic_x=True)
    assert len(periodic.links()) == 18


def test_links_point_into_solid_nodes(tiny_spec: ChannelSpec) -> None:
    solid = build_mask(tiny_spec)
    for r, c, p in solid.links():
        assert not solid.mask[r, c]
        assert solid.mask[r + int(D2Q9.ey[p]), c + int(D2Q9.ex[p])]


def test_bounce_back_reflects_wall_populations() -> None:
    mask = np.zeros((4, 3), dtype=bool)
    mask[0, :] = True
    mask[-1, :] = True
    solid = SolidMask.from_array(mask)
    f = np.random.default_rng(0).uniform(0.1, 1.0, (9, 4, 3))
    out = stream(bounce_back(f, solid))
    assert out[2, 1, 1] == f[4, 1, 1]
    assert out[5, 1, 1] == f[7, 1, 1]
    assert out[6, 1, 1] == f[8, 1, 1]
    assert out[4, 2, 1] == f[2, 2, 1]


def test_bounce_back_leaves_fluid_nodes_untouched(tiny_spec: ChannelSpec) -> None:
    solid = build_mask(tiny_spec)
    f = np.random.default_rng(1).uniform(0.1, 1.0, (9,) + solid.shape)
    out = bounce_back(f, solid)
    np.testing.assert_array_equal(out[:, solid.fluid], f[:, solid.fluid])


def test_bounce_back_conserves_mass_at_rest(tiny_spec: ChannelSpec) -> None:
    solid = build_mask(tiny_spec, periodic_x=True)
    f = equilibrium(np.ones(solid.shape), (np.zeros(solid.shape), np.zeros(solid.shape)))
    f[:, solid.mask] = 0.0
    before = f[:, solid.fluid].sum()
    out = stream(bounce_back(f, solid))
    assert out[:, solid.fluid].sum() == pytest.approx(before, rel=1e-12)


def test_inlet_closure_imposes_velocity() -> None:
    f = equilibrium(np.full((5, 4), 1.01), (np.full((5, 4), 0.01), np.zeros((5, 4))))
    out = inlet_velocity_bc(f, u_in=0.03)
    macro = compute_moments(out)
    np.testing.assert_allclose(macro.u[:, 0], 0.03, atol=1e-14)
    np.testing.assert_allclose(macro.v[:, 0], 0.0, atol=1e-14)
    np.testing.assert_array_equal(out[:, :, 1:], f[:, :, 1:])


def test_outlet_closure_imposes_density() -> None:
    f = equilibrium(np.full((5, 4), 1.02), (np.full((5, 4), 0.02), np.zeros((5, 4))))
    out = outlet_pressure_bc(f, rho_out=0.99)
    macro = compute_moments(out)
    np.testing.assert_allclose(macro.rho[:, -1], 0.99, atol=1e-14)
    np.testing.assert_allclose(macro.v[:, -1], 0.0, atol=1e-14)


def test_closures_skip_solid_rows() -> None:
    mask = np.zeros((5, 4), dtype=bool)
    mask[0, :] = True
    mask[-1, :] = True
    solid = SolidMask.from_array(mask)
    f = np.random.default_rng(2).uniform(0.05, 0.2, (9, 5, 4))
    out = outlet_pressure_bc(inlet_velocity_bc(f, 0.02, solid), 1.0, solid)
    np.testing.assert_array_equal(out[:, 0, :], f[:, 0, :])
    np.testing.assert_array_equal(out[:, -1, :], f[:, -1, :])
    macro = compute_moments(out, solid=mask)
    np.testing.assert_allclose(macro.u[1:-1, 0], 0.02, atol=1e-14)
    np.testing.assert_allclose(macro.rho[1:-1, -1], 1.0, atol=1e-14)


def test_outlet_rejects_non_positive_density() -> None:
    f = equilibrium(1.0, (0.0, 0.0)) * np.ones((9, 3, 3))
    with pytest.raises(DivergenceError):
        outlet_pressure_bc(f, rho_out=0.0)


def test_closed_box_conserves_mass_over_many_steps() -> None:
    rng = np.random.default_rng(7)
    mask = np.ones((8, 10), dtype=bool)
    mask[1:-1, 1:-1] = False
    solid = SolidMask.from_array(mask)
    f = rng.uniform(0.1, 0.12, size=(9, 8, 10))
    initial = f[:, solid.fluid].sum()
    for _ in range(10):
        macro = compute_moments(f, solid=mask)
        post = collide(f, equilibrium(macro.rho, (macro.U, macro.V)), tau=0.8)
        f = stream(bounce_back(post, solid))
        assert f[:, solid.fluid].sum() == pytest.approx(initial, rel=1e-12)


def test_inlet_closure_leaves_quiescent_field_unchanged() -> None:
    f = equilibrium(np.ones((5, 4)), (np.zeros((5, 4)), np.zeros((5, 4))))
    np.testing.assert_allclose(inlet_velocity_bc(f, 0.0), f, atol=1e-15)
