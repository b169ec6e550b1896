# Copyright (c) 2025 CoReason, Inc.
#
# This software is proprietary and dual-licensed.
# Licensed under the Prosperity Public License 3.0 (the "License").
# A copy of the license is available at https://prosperitylicense.com/versions/3.0.0
# For details, see the LICENSE file.
# Commercial use beyond a 30-day trial requires a separate license.
#
# Source Code: https://github.com/CoReason-AI/texflow

from pathlib import Path

import numpy as np
import pytest

from texflow.exceptions import ArtifactIOError
from texflow.nn.checkpoint import (
    decode_parameters,
    encode_parameters,
    load_checkpoint,
    save_checkpoint,
    sidecar_path,
)
from texflow.nn.tensor import ParameterStore
from texflow.schemas import CheckpointMeta, UNetConfig


@pytest.fixture
def store() -> ParameterStore:
    params = ParameterStore()
    params.add("enc0.conv1.w", np.arange(24, dtype=np.float64).reshape(2, 1, 3, 4) / 7.0)
    params.add("enc0.conv1.b", np.array([0.5, -0.25]))
    params.add("head.b", np.array(1.5))
    return params


def test_checkpoint_round_trip(tmp_path: Path, store: ParameterStore) -> None:
    meta = CheckpointMeta(model=UNetConfig(depth=2), epoch=3, val_loss=0.125)
    path = save_checkpoint(tmp_path / "best.txfw", store, meta)
    assert sidecar_path(path) == tmp_path / "best.json"
    arrays, loaded_meta = load_checkpoint(path)
    assert list(arrays) == store.names()
    assert loaded_meta == meta
    for name, param in store.items():
        assert arrays[name].dtype == np.float32
        np.testing.assert_allclose(arrays[name], param.data, rtol=1e-7)
    assert arrays["head.b"].shape == ()


def test_bad_magic_and_version(store: ParameterStore) -> None:
    blob = bytearray(encode_parameters(store.state()))
    broken = bytes(b"NOPE" + blob[4:])
    with pytest.raises(ArtifactIOError, match="magic"):
        decode_parameters(broken)
    blob[4] = 9
    with pytest.raises(ArtifactIOError, match="version"):
        decode_parameters(bytes(blob))


def test_truncation_and_trailing_bytes(store: ParameterStore) -> None:
    blob = encode_parameters(store.state())
    with pytest.raises(ArtifactIOError):
        decode_parameters(blob[:-2])
    with pytest.raises(ArtifactIOError):
        decode_parameters(blob[:12])
    with pytest.raises(ArtifactIOError, match="trailing"):
        decode_parameters(blob + b"\x01")


def test_duplicate_names_rejected() -> None:
    single = encode_parameters({"w": np.ones(2)})
    body = single[10:]
    doubled = b"TXFW" + (1).to_bytes(2, "little") + (2).to_bytes(4, "little") + body + body
    with pytest.raises(ArtifactIOError, match="duplicate"):
        decode_parameters(doubled)


def test_missing_sidecar(tmp_path: Path, store: ParameterStore) -> None:
    path = save_checkpoint(tmp_path / "m.txfw", store, CheckpointMeta(model=UNetConfig()))
    sidecar_path(path).unlink()
    with pytest.raises(ArtifactIOError, match="not found"):
        load_checkpoint(path)
    sidecar_path(path).write_text("{}")
    with pytest.raises(ArtifactIOError, match="Malformed"):
        load_checkpoint(path)
