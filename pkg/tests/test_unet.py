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

from texflow.exceptions import ConfigurationError
from texflow.models.unet import GATE_OPEN_BIAS, UNet, build_model, load_model, save_model
from texflow.nn.gradcheck import grad_check
from texflow.nn.ops import mse_loss
from texflow.nn.tensor import Tape
from texflow.schemas import UNetConfig


def _cfg(**kwargs: object) -> UNetConfig:
    base: dict[str, object] = {"base_filters": 4, "depth": 2, "dropout_rate": 0.0, "dtype": "float64"}
    base.update(kwargs)
    return UNetConfig.model_validate(base)


def test_attention_adds_only_gate_parameters() -> None:
    plain = UNet(_cfg())
    gated = UNet(_cfg(attention=True))
    extra = set(gated.params.names()) - set(plain.params.names())
    assert extra == set(gated.gate_names())
    assert extra == {
        f"dec{i}.gate.{part}" for i in range(2) for part in ("wg", "wx", "b", "psi.w", "psi.b")
    }
    assert set(plain.params.names()) <= set(gated.params.names())
    assert plain.gate_names() == []
    assert gated.params["dec0.gate.psi.b"].data[0] == GATE_OPEN_BIAS


def test_parameter_shapes() -> None:
    model = UNet(_cfg(in_channels=5))
    assert model.params["enc0.conv1.w"].shape == (4, 5, 3, 3)
    assert model.params["enc1.conv2.w"].shape == (8, 8, 3, 3)
    assert model.params["bottleneck.conv1.w"].shape == (16, 8, 3, 3)
    assert model.params["dec1.up.w"].shape == (16, 8, 2, 2)
    assert model.params["dec0.conv1.w"].shape == (4, 8, 3, 3)
    assert model.params["head.w"].shape == (2, 4, 1, 1)


@pytest.mark.parametrize(("height", "width"), [(8, 8), (7, 13), (12, 5)])
def test_output_shape_matches_input(rng: np.random.Generator, height: int, width: int) -> None:
    model = UNet(_cfg())
    out = model.forward(Tape(enabled=False), rng.random((2, 4, height, width)))
    assert out.shape == (2, 2, height, width)


def test_pad_mode_none_rejects_indivisible_extents(rng: np.random.Generator) -> None:
    model = UNet(_cfg(pad_mode="none"))
    assert model.forward(Tape(enabled=False), rng.random((1, 4, 8, 12))).shape == (1, 2, 8, 12)
    with pytest.raises(ConfigurationError, match="divisible"):
        model.forward(Tape(enabled=False), rng.random((1, 4, 8, 10)))


def test_channel_mismatch(rng: np.random.Generator) -> None:
    with pytest.raises(ConfigurationError, match="inputs"):
        UNet(_cfg()).forward(Tape(enabled=False), rng.random((1, 5, 8, 8)))


def test_open_gates_reduce_to_standard_model(rng: np.random.Generator) -> None:
    plain = UNet(_cfg(seed=3))
    gated = UNet(_cfg(seed=11, attention=True))
    copied = gated.copy_shared_from(plain)
    assert set(copied) == set(plain.params.names())
    gated.force_gates_open()
    inputs = rng.random((2, 4, 8, 8))
    np.testing.assert_allclose(gated.predict(inputs), plain.predict(inputs), rtol=1e-10, atol=1e-12)


def test_initialization_is_deterministic(rng: np.random.Generator) -> None:
    a = UNet(_cfg(seed=7))
    b = UNet(_cfg(seed=7))
    c = UNet(_cfg(seed=8))
    for name, param in a.params.items():
        np.testing.assert_array_equal(param.data, b.params[name].data)
    assert not np.array_equal(a.params["enc0.conv1.w"].data, c.params["enc0.conv1.w"].data)
    inputs = rng.random((1, 4, 8, 8))
    np.testing.assert_array_equal(a.predict(inputs), b.predict(inputs))


def test_dropout_only_in_training(rng: np.random.Generator) -> None:
    model = UNet(_cfg(dropout_rate=0.5))
    inputs = rng.random((1, 4, 8, 8))
    np.testing.assert_array_equal(model.predict(inputs), model.predict(inputs))
    first = model.forward(Tape(), inputs, training=True).data
    second = model.forward(Tape(), inputs, training=True).data
    assert not np.array_equal(first, second)


@pytest.mark.parametrize("attention", [False, True])
def test_every_parameter_receives_gradient(rng: np.random.Generator, attention: bool) -> None:
    model = UNet(_cfg(attention=attention, dropout_rate=0.3))
    tape = Tape()
    out = model.forward(tape, rng.random((2, 4, 8, 8)), training=True)
    tape.backward(mse_loss(tape, out, rng.random(out.shape)))
    assert model.params.untouched() == []
    model.params.reset_touched()
    assert len(model.params.untouched()) == len(model.params)


def test_save_and_load_round_trip(tmp_path: Path, rng: np.random.Generator) -> None:
    model = build_model(_cfg(attention=True, dtype="float32"))
    path = save_model(model, tmp_path / "model.txfw", epoch=4, val_loss=0.5)
    loaded, meta = load_model(path)
    assert meta.epoch == 4 and meta.val_loss == 0.5
    assert loaded.cfg == model.cfg
    assert loaded.label == "U-Net AM"
    inputs = rng.random((1, 4, 8, 8))
    np.testing.assert_array_equal(loaded.predict(inputs), model.predict(inputs))


def test_attention_model_gradients(rng: np.random.Generator) -> None:
    model = UNet(_cfg(base_filters=2, depth=1, attention=True))
    model.params["dec0.gate.psi.w"].data = rng.standard_normal(model.params["dec0.gate.psi.w"].shape)
    inputs = rng.random((1, 4, 4, 4))
    params = [param for _, param in model.params.items()]
    errors = grad_check(lambda tape: model.forward(tape, inputs), params, eps=1e-6)
    assert max(errors) < 1e-4


def test_gates_start_uniform_and_open() -> None:
    model = UNet(_cfg(attention=True))
    for name in model.gate_names():
        if name.endswith("psi.w"):
            assert not model.params[name].data.any()
    assert 1.0 / (1.0 + np.exp(-GATE_OPEN_BIAS)) > 0.98
