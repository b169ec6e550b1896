# Copyright (c) 2025 CoReason, Inc.
#
# This software is proprietary and dual-licensed.
# Licensed under the Prosperity Public License 3.0 (the "License").
# A copy of the license is available at https://prosperitylicense.com/versions/3.0.0
# For details, see the LICENSE file.
# Commercial use beyond a 30-day trial requires a separate license.
#
# Source Code: https://github.com/CoReason-AI/texflow

import zlib
from pathlib import Path

import numpy as np

from texflow.exceptions import ConfigurationError
from texflow.nn import ops
from texflow.nn.checkpoint import load_checkpoint, save_checkpoint
from texflow.nn.tensor import Array, ParameterStore, Tape, Tensor
from texflow.schemas import CheckpointMeta, NormalizationStats, UNetConfig
from texflow.utils.logger import logger

"""
Standard and attention U-Nets.

Encoder stage i: conv3x3, relu, conv3x3, relu, dropout, maxpool (filters base * 2**i).
Bottleneck: conv block at twice the deepest filter count.
Decoder stage i: stride-2 transposed conv, skip concatenation (attention-gated when enabled), conv block.
Head: 1x1 conv to the output channels.

Both variants share parameter names, so a standard model's weights load into an attention model
whose gate parameters are the only extras.
"""

# Initial coefficient-map bias; sigmoid(4) ~ 0.98 keeps new gates nearly open.
GATE_OPEN_BIAS = 4.0
GATE_FORCED_BIAS = 50.0


def _he_normal(name: str, shape: tuple[int, ...], fan_in: int, seed: int, dtype: str) -> Array:
    rng = np.random.default_rng([seed, zlib.crc32(name.encode("utf-8"))])
    return (rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)).astype(dtype)


def gate_channels(skip_channels: int) -> int:
    return max(1, skip_channels // 2)


class UNet:
    """
    U-Net with optional additive attention gates on the skip connections.

    Attributes:
        cfg (UNetConfig): Architecture.
        params (ParameterStore): Trainable parameters.
    """

    def __init__(self, cfg: UNetConfig) -> None:
        self.cfg = cfg
        self.params = ParameterStore()
        self._dropout_rng = np.random.default_rng(cfg.seed + 1)
        self._build()

    def _conv(self, name: str, c_out: int, c_in: int, k: int = 3) -> None:
        key = f"{name}.w"
        self.params.add(key, _he_normal(key, (c_out, c_in, k, k), c_in * k * k, self.cfg.seed, self.dtype))
        self.params.add(f"{name}.b", np.zeros(c_out, dtype=self.dtype))

    def _build(self) -> None:
        filters = self.cfg.filters
        c_in = self.cfg.in_channels
        for i, f in enumerate(filters):
            self._conv(f"enc{i}.conv1", f, c_in)
            self._conv(f"enc{i}.conv2", f, f)
            c_in = f
        bottom = 2 * filters[-1]
        self._conv("bottleneck.conv1", bottom, filters[-1])
        self._conv("bottleneck.conv2", bottom, bottom)
        c_prev = bottom
        for i in reversed(range(self.cfg.depth)):
            f = filters[i]
            name = f"dec{i}.up.w"
            self.params.add(name, _he_normal(name, (c_prev, f, 2, 2), c_prev, self.cfg.seed, self.dtype))
            self.params.add(f"dec{i}.up.b", np.zeros(f, dtype=self.dtype))
            if self.cfg.attention:
                self._gate(f"dec{i}.gate", f)
            self._conv(f"dec{i}.conv1", f, 2 * f)
            self._conv(f"dec{i}.conv2", f, f)
            c_prev = f
        self._conv("head", self.cfg.out_channels, filters[0], k=1)

    def _gate(self, name: str, channels: int) -> None:
        inter = gate_channels(channels)
        for part in ("wg", "wx"):
            key = f"{name}.{part}"
            self.params.add(key, _he_normal(key, (inter, channels, 1, 1), channels, self.cfg.seed, self.dtype))
        self.params.add(f"{name}.b", np.zeros(inter, dtype=self.dtype))
        # Zero psi weights start every coefficient map spatially uniform.
        self.params.add(f"{name}.psi.w", np.zeros((1, inter, 1, 1), dtype=self.dtype))
        self.params.add(f"{name}.psi.b", np.full(1, GATE_OPEN_BIAS, dtype=self.dtype))

    @property
    def dtype(self) -> str:
        return self.cfg.dtype

    @property
    def multiple(self) -> int:
        return int(2**self.cfg.depth)

    @property
    def label(self) -> str:
        return "U-Net AM" if self.cfg.attention else "U-Net"

    def _block(self, tape: Tape, x: Tensor, name: str) -> Tensor:
        p = self.params
        x = ops.relu(tape, ops.conv2d(tape, x, p[f"{name}.conv1.w"], p[f"{name}.conv1.b"]))
        return ops.relu(tape, ops.conv2d(tape, x, p[f"{name}.conv2.w"], p[f"{name}.conv2.b"]))

    def _gated(self, tape: Tape, g: Tensor, skip: Tensor, name: str) -> Tensor:
        p = self.params
        return ops.attention_gate(
            tape, g, skip, p[f"{name}.wg"], p[f"{name}.wx"], p[f"{name}.b"], p[f"{name}.psi.w"], p[f"{name}.psi.b"]
        )

    def prepare(self, inputs: Array) -> tuple[Array, tuple[int, int]]:
        """
        Casts and pads a batch so both spatial extents are multiples of 2**depth.

        Raises:
            ConfigurationError: On a channel mismatch, or indivisible extents with pad_mode "none".
        """
        if inputs.ndim != 4 or inputs.shape[1] != self.cfg.in_channels:
            raise ConfigurationError(
                f"Model expects (N, {self.cfg.in_channels}, H, W) inputs, got shape {inputs.shape}"
            )
        data = np.asarray(inputs, dtype=self.dtype)
        height, width = data.shape[2:]
        if self.cfg.pad_mode == "none":
            if height % self.multiple or width % self.multiple:
                raise ConfigurationError(
                    f"Patch extents ({height}, {width}) are not divisible by {self.multiple}; use pad_mode 'edge'"
                )
            return data, (height, width)
        return ops.pad_to_multiple(data, self.multiple)

    def forward(self, tape: Tape, inputs: Array, training: bool = False) -> Tensor:
        """
        Runs the network on a batch.

        Args:
            tape (Tape): Tape recording the pass; pass `Tape(enabled=False)` for inference.
            inputs (NDArray): (N, C_in, H, W) normalized inputs.
            training (bool): Enables dropout.

        Returns:
            Tensor: (N, C_out, H, W) predictions.
        """
        data, (height, width) = self.prepare(inputs)
        p = self.params
        x = Tensor(data)
        skips = []
        for i in range(self.cfg.depth):
            x = self._block(tape, x, f"enc{i}")
            x = ops.dropout(tape, x, self.cfg.dropout_rate, self._dropout_rng, training)
            skips.append(x)
            x, _ = ops.maxpool2(tape, x)
        x = self._block(tape, x, "bottleneck")
        for i in reversed(range(self.cfg.depth)):
            up = ops.conv_transpose2d(tape, x, p[f"dec{i}.up.w"], p[f"dec{i}.up.b"])
            skip = self._gated(tape, up, skips[i], f"dec{i}.gate") if self.cfg.attention else skips[i]
            x = self._block(tape, ops.concat(tape, [up, skip]), f"dec{i}")
        out = ops.conv2d(tape, x, p["head.w"], p["head.b"], padding=0)
        return ops.crop(tape, out, height, width)

    def predict(self, inputs: Array, batch_size: int = 32) -> Array:
        """Evaluation-mode forward over `inputs` in batches."""
        outputs = [
            self.forward(Tape(enabled=False), inputs[start : start + batch_size]).data
            for start in range(0, len(inputs), batch_size)
        ]
        return np.concatenate(outputs, axis=0)

    def gate_names(self) -> list[str]:
        return [name for name in self.params if ".gate." in name]

    def force_gates_open(self) -> None:
        """Sets every coefficient map to 1 (psi weights 0, large psi bias)."""
        for i in range(self.cfg.depth):
            if f"dec{i}.gate.psi.w" in self.params:
                self.params[f"dec{i}.gate.psi.w"].data[...] = 0
                self.params[f"dec{i}.gate.psi.b"].data[...] = GATE_FORCED_BIAS

    def copy_shared_from(self, other: "UNet") -> list[str]:
        """
        Copies every parameter whose name exists in both models.

        Returns:
            list[str]: Names copied.
        """
        copied = []
        for name, param in self.params.items():
            if name in other.params and other.params[name].shape == param.shape:
                param.data = other.params[name].data.astype(self.dtype)
                copied.append(name)
        return copied


def build_model(cfg: UNetConfig) -> UNet:
    model = UNet(cfg)
    logger.info(f"Built {model.label} with {model.params.n_parameters} parameters ({len(model.params)} tensors)")
    return model


def save_model(
    model: UNet,
    path: str | Path,
    stats: NormalizationStats | None = None,
    epoch: int | None = None,
    val_loss: float | None = None,
) -> Path:
    meta = CheckpointMeta(model=model.cfg, stats=stats, epoch=epoch, val_loss=val_loss)
    return save_checkpoint(path, model.params, meta)


def load_model(path: str | Path) -> tuple[UNet, CheckpointMeta]:
    """
    Rebuilds a model from a checkpoint.

    Raises:
        ArtifactIOError: If the checkpoint is unreadable.
        ConfigurationError: If the stored parameters do not match the stored configuration.
    """
    arrays, meta = load_checkpoint(path)
    model = UNet(meta.model)
    model.params.load_state(arrays)
    logger.info(f"Loaded {model.label} from {path}")
    return model, meta
