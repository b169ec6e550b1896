# Copyright (c) 2025 CoReason, Inc.
#
# This software is proprietary and dual-licensed.
# Licensed under the Prosperity Public License 3.0 (the "License").
# A copy of the license is available at https://prosperitylicense.com/versions/3.0.0
# For details, see the LICENSE file.
# Commercial use beyond a 30-day trial requires a separate license.
#
# Source Code: https://github.com/CoReason-AI/texflow

from collections.abc import Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from texflow.exceptions import ConfigurationError, UndefinedMetricError
from texflow.schemas import ChannelMetrics, MetricsReport

"""
Regression metrics, error maps and vorticity.
"""

FloatArray = NDArray[np.float64]
COMPARISON_COLUMNS = ("model", "MAE", "MSE", "RMSE", "R2")


def _pair(y: ArrayLike, yhat: ArrayLike, minimum: int = 1) -> tuple[FloatArray, FloatArray]:
    a = np.asarray(y, dtype=np.float64).ravel()
    b = np.asarray(yhat, dtype=np.float64).ravel()
    if a.size != b.size:
        raise UndefinedMetricError(f"Length mismatch: {a.size} true vs {b.size} predicted values")
    if a.size < minimum:
        raise UndefinedMetricError(f"At least {minimum} values are required, got {a.size}")
    return a, b


def mae(y: ArrayLike, yhat: ArrayLike) -> float:
    a, b = _pair(y, yhat)
    return float(np.mean(np.abs(a - b)))


def mse(y: ArrayLike, yhat: ArrayLike) -> float:
    a, b = _pair(y, yhat)
    return float(np.mean((a - b) ** 2))


def rmse(y: ArrayLike, yhat: ArrayLike) -> float:
    return float(np.sqrt(mse(y, yhat)))


def r2(y: ArrayLike, yhat: ArrayLike) -> float:
    """
    Coefficient of determination 1 - RSS / TSS.

    Raises:
        UndefinedMetricError: On a length mismatch, fewer than two values, or a constant `y`.
    """
    a, b = _pair(y, yhat, minimum=2)
    tss = float(np.sum((a - a.mean()) ** 2))
    if tss == 0.0:
        raise UndefinedMetricError("R² is undefined for a constant target")
    return 1.0 - float(np.sum((a - b) ** 2)) / tss


def relative_l2(y: ArrayLike, yhat: ArrayLike) -> float:
    """||y - yhat||_2 / ||y||_2; NaN when y is all zeros."""
    a, b = _pair(y, yhat)
    norm = float(np.linalg.norm(a))
    return float(np.linalg.norm(a - b)) / norm if norm > 0 else float("nan")


def error_map(true: ArrayLike, pred: ArrayLike, mask: ArrayLike | None = None) -> FloatArray:
    """
    Absolute difference |true - pred|, zero on solid nodes.

    Args:
        true (ArrayLike): Reference field.
        pred (ArrayLike): Predicted field, same shape.
        mask (ArrayLike | None): Boolean solid mask broadcastable to the fields.
    """
    a = np.asarray(true, dtype=np.float64)
    b = np.asarray(pred, dtype=np.float64)
    if a.shape != b.shape:
        raise ConfigurationError(f"error_map shape mismatch: {a.shape} vs {b.shape}")
    diff = np.abs(a - b)
    if mask is not None:
        diff = np.where(np.asarray(mask, dtype=bool), 0.0, diff)
    return diff


def relative_error_percent(true: Sequence[ArrayLike], pred: Sequence[ArrayLike]) -> float:
    """
    Range-normalized MAE in percent: 100 * mean|y - yhat| / (max y - min y) per channel, averaged over channels.

    Args:
        true (Sequence[ArrayLike]): One array per channel (e.g. u and v).
        pred (Sequence[ArrayLike]): Matching predictions.

    Raises:
        UndefinedMetricError: If a channel has zero range or the channel counts differ.
    """
    if len(true) != len(pred) or not true:
        raise UndefinedMetricError("relative_error_percent needs matching, non-empty channel lists")
    values = []
    for y, yhat in zip(true, pred, strict=True):
        a, b = _pair(y, yhat)
        span = float(a.max() - a.min())
        if span == 0.0:
            raise UndefinedMetricError("relative_error_percent is undefined for a channel with zero range")
        values.append(100.0 * float(np.mean(np.abs(a - b))) / span)
    return float(np.mean(values))


def _derivative(field: FloatArray, fluid: NDArray[np.bool_], axis: int) -> FloatArray:
    n = field.shape[axis]
    ahead = np.zeros_like(fluid)
    behind = np.zeros_like(fluid)
    head = [slice(None)] * 2
    tail = [slice(None)] * 2
    head[axis], tail[axis] = slice(0, n - 1), slice(1, n)
    # A neighbour is usable when it lies inside the grid and is fluid.
    ahead[tuple(head)] = fluid[tuple(tail)]
    behind[tuple(tail)] = fluid[tuple(head)]
    fwd = np.zeros_like(field)
    bwd = np.zeros_like(field)
    fwd[tuple(head)] = field[tuple(tail)] - field[tuple(head)]
    bwd[tuple(tail)] = field[tuple(tail)] - field[tuple(head)]
    central = 0.5 * (fwd + bwd)
    out = np.where(ahead & behind, central, np.where(ahead, fwd, np.where(behind, bwd, 0.0)))
    return np.where(fluid, out, 0.0)


def vorticity(U: ArrayLike, V: ArrayLike, mask: ArrayLike | None = None) -> FloatArray:
    """
    Scalar vorticity dV/dx - dU/dy with unit spacing.

    Central differences where both neighbours along an axis are fluid, one-sided next to solids and
    grid borders, zero on solid nodes (and along an axis where a node has no fluid neighbour).
    Arrays are indexed [row = y, col = x].

    Raises:
        ConfigurationError: If the fields differ in shape or have fewer than 3 nodes along an axis.
    """
    u = np.asarray(U, dtype=np.float64)
    v = np.asarray(V, dtype=np.float64)
    if u.shape != v.shape or u.ndim != 2:
        raise ConfigurationError(f"vorticity needs two 2-D fields of one shape, got {u.shape} and {v.shape}")
    if min(u.shape) < 3:
        raise ConfigurationError(f"vorticity needs at least 3 nodes per axis, got {u.shape}")
    fluid = np.ones(u.shape, dtype=bool) if mask is None else ~np.asarray(mask, dtype=bool)
    return _derivative(v, fluid, axis=1) - _derivative(u, fluid, axis=0)


def channel_metrics(y: ArrayLike, yhat: ArrayLike) -> ChannelMetrics:
    return ChannelMetrics(
        mae=mae(y, yhat), mse=mse(y, yhat), rmse=rmse(y, yhat), r2=r2(y, yhat), relative_l2=relative_l2(y, yhat)
    )


def compute_report(
    model: str,
    true: ArrayLike,
    pred: ArrayLike,
    mask: ArrayLike | None = None,
    denormalized: bool = True,
) -> MetricsReport:
    """
    Metrics of predicted velocity fields over fluid nodes.

    Args:
        model (str): Label of the evaluated model.
        true (ArrayLike): (N, 2, H, W) reference (u, v).
        pred (ArrayLike): Predictions, same shape.
        mask (ArrayLike | None): (N, H, W) solid mask; solid nodes are excluded from every reduction.
        denormalized (bool): Whether the fields are in lattice units.

    Returns:
        MetricsReport: Per-channel (u, v, magnitude) and pooled metrics.
    """
    a = np.asarray(true, dtype=np.float64)
    b = np.asarray(pred, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 4 or a.shape[1] != 2:
        raise ConfigurationError(f"Expected matching (N, 2, H, W) fields, got {a.shape} and {b.shape}")
    fluid = np.ones((a.shape[0],) + a.shape[2:], dtype=bool) if mask is None else ~np.asarray(mask, dtype=bool)
    u_true, v_true = a[:, 0][fluid], a[:, 1][fluid]
    u_pred, v_pred = b[:, 0][fluid], b[:, 1][fluid]
    channels = {
        "u": channel_metrics(u_true, u_pred),
        "v": channel_metrics(v_true, v_pred),
        "magnitude": channel_metrics(np.hypot(u_true, v_true), np.hypot(u_pred, v_pred)),
    }
    pooled = channel_metrics(np.concatenate([u_true, v_true]), np.concatenate([u_pred, v_pred]))
    return MetricsReport(
        model=model,
        channels=channels,
        pooled=pooled,
        relative_error_percent=relative_error_percent([u_true, v_true], [u_pred, v_pred]),
        n=int(u_true.size),
        denormalized=denormalized,
    )


def compare_models(reports: Sequence[MetricsReport]) -> list[list[str | float]]:
    """
    Comparison table rows (model, MAE, MSE, RMSE, R2) on pooled velocity, one per report.

    Repeated labels get a "#k" suffix.
    """
    rows: list[list[str | float]] = []
    seen: dict[str, int] = {}
    for report in reports:
        seen[report.model] = seen.get(report.model, 0) + 1
        label = report.model if seen[report.model] == 1 else f"{report.model} #{seen[report.model]}"
        p = report.pooled
        rows.append([label, p.mae, p.mse, p.rmse, p.r2])
    return rows
