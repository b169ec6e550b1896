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

from texflow.exceptions import ConfigurationError, UndefinedMetricError
from texflow.metrics import (
    compare_models,
    compute_report,
    error_map,
    mae,
    mse,
    r2,
    relative_error_percent,
    relative_l2,
    rmse,
    vorticity,
)


def test_hand_computed_values() -> None:
    y, yhat = [1.0, 2.0, 3.0], [2.0, 2.0, 2.0]
    assert mae(y, yhat) == pytest.approx(2.0 / 3.0)
    assert mse(y, yhat) == pytest.approx(2.0 / 3.0)
    assert rmse(y, yhat) == pytest.approx(np.sqrt(2.0 / 3.0))
    assert r2(y, yhat) == pytest.approx(0.0)
    assert relative_l2(y, yhat) == pytest.approx(np.sqrt(2.0) / np.sqrt(14.0))
    assert r2(y, y) == 1.0


def test_metrics_match_direct_formulas(rng: np.random.Generator) -> None:
    y = rng.standard_normal(100)
    yhat = y + 0.1 * rng.standard_normal(100)
    assert mae(y, yhat) == pytest.approx(np.abs(y - yhat).mean())
    assert mse(y, yhat) == pytest.approx(((y - yhat) ** 2).mean())
    assert rmse(y, yhat) ** 2 == pytest.approx(mse(y, yhat))
    expected_r2 = 1.0 - ((y - yhat) ** 2).sum() / ((y - y.mean()) ** 2).sum()
    assert r2(y, yhat) == pytest.approx(expected_r2)
    assert 0.9 < r2(y, yhat) < 1.0


def test_undefined_metrics() -> None:
    with pytest.raises(UndefinedMetricError):
        r2([1.0, 1.0, 1.0], [1.0, 2.0, 3.0])
    with pytest.raises(UndefinedMetricError):
        r2([1.0], [1.0])
    with pytest.raises(UndefinedMetricError):
        mae([1.0, 2.0], [1.0])
    with pytest.raises(UndefinedMetricError):
        mse([], [])
    assert np.isnan(relative_l2([0.0, 0.0], [1.0, 0.0]))


def test_error_map_masks_solids() -> None:
    true = np.array([[1.0, 2.0], [3.0, 4.0]])
    pred = np.array([[1.5, 2.0], [2.0, 5.0]])
    mask = np.array([[False, False], [True, False]])
    np.testing.assert_allclose(error_map(true, pred, mask), [[0.5, 0.0], [0.0, 1.0]])
    with pytest.raises(ConfigurationError):
        error_map(true, pred[:, :1])


def test_relative_error_percent() -> None:
    u = np.array([0.0, 1.0, 2.0, 4.0])
    v = np.array([-1.0, 1.0])
    value = relative_error_percent([u, v], [u + 0.4, v - 0.2])
    assert value == pytest.approx((100 * 0.4 / 4.0 + 100 * 0.2 / 2.0) / 2)
    with pytest.raises(UndefinedMetricError):
        relative_error_percent([np.ones(3)], [np.ones(3)])
    with pytest.raises(UndefinedMetricError):
        relative_error_percent([u], [u, u])


def test_vorticity_of_rigid_rotation() -> None:
    y, x = np.mgrid[0:6, 0:7].astype(float)
    omega = 0.3
    np.testing.assert_allclose(vorticity(-omega * y, omega * x), 2 * omega, atol=1e-12)


def test_vorticity_of_shear_flow_with_solids() -> None:
    y, _ = np.mgrid[0:5, 0:6].astype(float)
    mask = np.zeros((5, 6), dtype=bool)
    mask[0, :] = True
    mask[2, 3] = True
    w = vorticity(y, np.zeros_like(y), mask)
    np.testing.assert_allclose(w[~mask], -1.0, atol=1e-12)
    assert np.all(w[mask] == 0.0)


def test_vorticity_is_linear(rng: np.random.Generator) -> None:
    u1, v1, u2, v2 = rng.standard_normal((4, 5, 5))
    combined = vorticity(2 * u1 + u2, 2 * v1 + v2)
    np.testing.assert_allclose(combined, 2 * vorticity(u1, v1) + vorticity(u2, v2), atol=1e-12)


def test_vorticity_rejects_small_or_mismatched_fields() -> None:
    with pytest.raises(ConfigurationError):
        vorticity(np.zeros((2, 5)), np.zeros((2, 5)))
    with pytest.raises(ConfigurationError):
        vorticity(np.zeros((4, 5)), np.zeros((5, 4)))


def test_compute_report_excludes_solid_nodes(rng: np.random.Generator) -> None:
    true = rng.standard_normal((3, 2, 4, 5))
    pred = true.copy()
    mask = np.zeros((3, 4, 5), dtype=bool)
    mask[:, 0, :] = True
    pred[:, :, 0, :] += 100.0
    report = compute_report("U-Net", true, pred, mask)
    assert report.n == 3 * 3 * 5
    assert report.pooled.mae == 0.0
    assert report.channels["u"].r2 == 1.0
    assert set(report.channels) == {"u", "v", "magnitude"}
    assert report.relative_error_percent == 0.0
    with pytest.raises(ConfigurationError):
        compute_report("U-Net", true[:, :1], pred[:, :1])


def test_compare_models_labels_duplicates(rng: np.random.Generator) -> None:
    true = rng.standard_normal((2, 2, 3, 3))
    first = compute_report("U-Net", true, true + 0.1)
    second = compute_report("U-Net", true, true - 0.2)
    rows = compare_models([first, second])
    assert [row[0] for row in rows] == ["U-Net", "U-Net #2"]
    assert rows[0][1] == pytest.approx(0.1)
    assert rows[1][2] == pytest.approx(0.04)
