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

from texflow.lbm.snapshots import FlowSnapshot
from texflow.schemas import ChannelSpec, SimulationConfig


@pytest.fixture(autouse=True)
def setup_env(monkeypatch: pytest.MonkeyPatch, tmp_path: Path) -> None:
    monkeypatch.setenv("TEXFLOW_LOG_DIR", str(tmp_path / "logs"))
    monkeypatch.setenv("TEXFLOW_RETRY_WAIT_MIN", "0")
    monkeypatch.setenv("TEXFLOW_RETRY_WAIT_MAX", "0")


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_spec() -> ChannelSpec:
    return ChannelSpec(L=32, H=12, h=2, w=4, s=4, offset=2)


@pytest.fixture
def tiny_sim_cfg(tiny_spec: ChannelSpec) -> SimulationConfig:
    return SimulationConfig(channel=tiny_spec, n_steps=20, snapshot_stride=5, capture_steps=(), log_every=10)


@pytest.fixture
def make_snapshot() -> Callable[..., FlowSnapshot]:
    """
    Builds synthetic snapshots with smooth, time-dependent fields on an (H, W) grid with solid wall rows.
    """

    def _make(t: int = 0, height: int = 8, width: int = 40) -> FlowSnapshot:
        y = np.arange(height, dtype=np.float64)[:, None]
        x = np.arange(width, dtype=np.float64)[None, :]
        mask = np.zeros((height, width), dtype=bool)
        mask[0, :] = True
        mask[-1, :] = True
        scale = 1.0 + 0.1 * t
        U = scale * 0.01 * y * (height - 1 - y) * (1.0 + 0.01 * x)
        V = 0.001 * scale * np.sin(x / 5.0) * np.ones_like(y)
        rho = 1.0 + 0.001 * scale * (width - x) / width * np.ones_like(y)
        U = np.where(mask, 0.0, U)
        V = np.where(mask, 0.0, V)
        return FlowSnapshot(t=t, rho=rho, p=rho / 3.0, U=U, V=V, mask=mask)

    return _make
