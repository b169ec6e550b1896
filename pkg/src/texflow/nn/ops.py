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
from typing import Literal

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from texflow.exceptions import ConfigurationError
from texflow.nn.tensor import Array, Tape, Tensor

"""
Differentiable operations on N x C x H x W tensors.

Every op takes the active `Tape` first and records a closure that accumulates gradients into its inputs.
"""

Padding = int | Literal["same", "valid"]


def _unbroadcast(grad: Array, shape: tuple[int, ...]) -> Array:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _send(tensor: Tensor, grad: Array) -> None:
    if tensor.requires_grad:
        tensor.accumulate(grad)


def add(tape: Tape, a: Tensor, b: Tensor) -> Tensor:
    def backward(g: Array) -> None:
        _send(a, _unbroadcast(g, a.shape))
        _send(b, _unbroadcast(g, b.shape))

    return tape.output(a.data + b.data, (a, b), backward)


def multiply(tape: Tape, a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product with numpy broadcasting."""

    def backward(g: Array) -> None:
        _send(a, _unbroadcast(g * b.data, a.shape))
        _send(b, _unbroadcast(g * a.data, b.shape))

    return tape.output(a.data * b.data, (a, b), backward)


def relu(tape: Tape, x: Tensor) -> Tensor:
    positive = x.data > 0

    def backward(g: Array) -> None:
        _send(x, g * positive)

    return tape.output(np.where(positive, x.data, 0).astype(x.dtype), (x,), backward)


def sigmoid(tape: Tape, x: Tensor) -> Tensor:
    # Split by sign so exp never overflows.
    z = np.exp(-np.abs(x.data))
    y = np.where(x.data >= 0, 1 / (1 + z), z / (1 + z)).astype(x.dtype)

    def backward(g: Array) -> None:
        _send(x, g * y * (1 - y))

    return tape.output(y, (x,), backward)


def softmax(tape: Tape, x: Tensor, axis: int = -1) -> Tensor:
    """
    Softmax along `axis`, stabilized by subtracting the maximum.

    Raises:
        ConfigurationError: If the axis is empty.
    """
    if x.data.shape[axis] == 0:
        raise ConfigurationError("softmax over an empty axis")
    e = np.exp(x.data - x.data.max(axis=axis, keepdims=True))
    y = e / e.sum(axis=axis, keepdims=True)

    def backward(g: Array) -> None:
        _send(x, y * (g - (g * y).sum(axis=axis, keepdims=True)))

    return tape.output(y, (x,), backward)


def dropout(tape: Tape, x: Tensor, rate: float, rng: np.random.Generator, training: bool) -> Tensor:
    """
    Inverted dropout: zeroes a `rate` fraction in training and scales the rest by 1 / (1 - rate).

    Identity in evaluation mode or at rate 0.
    """
    if not training or rate <= 0.0:
        return x
    if rate >= 1.0:
        raise ConfigurationError(f"dropout rate must be < 1, got {rate}")
    keep = (rng.random(x.shape) >= rate).astype(x.dtype) / (1.0 - rate)

    def backward(g: Array) -> None:
        _send(x, g * keep)

    return tape.output(x.data * keep, (x,), backward)


def dense(tape: Tape, x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """
    Affine map y = x w + b over the last axis.

    Args:
        x (Tensor): (..., D_in).
        w (Tensor): (D_in, D_out).
        b (Tensor | None): (D_out,).
    """
    if x.shape[-1] != w.shape[0]:
        raise ConfigurationError(f"dense: input features {x.shape[-1]} do not match weight {w.shape}")
    out = x.data @ w.data
    if b is not None:
        out = out + b.data
    parents = (x, w) if b is None else (x, w, b)

    def backward(g: Array) -> None:
        _send(x, g @ w.data.T)
        _send(w, x.data.reshape(-1, w.shape[0]).T @ g.reshape(-1, w.shape[1]))
        if b is not None:
            _send(b, g.reshape(-1, w.shape[1]).sum(axis=0))

    return tape.output(out, parents, backward)


def _resolve_padding(padding: Padding, kernel: int) -> int:
    if padding == "same":
        if kernel % 2 == 0:
            raise ConfigurationError(f"'same' padding needs an odd kernel, got {kernel}")
        return kernel // 2
    if padding == "valid":
        return 0
    return int(padding)


def _im2col(xp: Array, k: int, stride: int) -> tuple[Array, int, int]:
    """Unfolds (N, C, H, W) into (N * H_out * W_out, C * k * k) rows, one per output position."""
    windows = sliding_window_view(xp, (k, k), axis=(2, 3))[:, :, ::stride, ::stride]
    n, c, h_out, w_out = windows.shape[:4]
    cols = windows.transpose(0, 2, 3, 1, 4, 5).reshape(n * h_out * w_out, c * k * k)
    return cols, h_out, w_out


def _col2im(dcols: Array, shape: tuple[int, ...], k: int, stride: int, h_out: int, w_out: int) -> Array:
    """Adjoint of `_im2col`: scatters row gradients back onto the padded input."""
    n, c = shape[:2]
    blocks = dcols.reshape(n, h_out, w_out, c, k, k).transpose(0, 3, 4, 5, 1, 2)
    dxp = np.zeros(shape, dtype=dcols.dtype)
    for i in range(k):
        for j in range(k):
            dxp[:, :, i : i + stride * h_out : stride, j : j + stride * w_out : stride] += blocks[:, :, i, j]
    return dxp


def conv2d(
    tape: Tape, x: Tensor, w: Tensor, b: Tensor | None = None, stride: int = 1, padding: Padding = "same"
) -> Tensor:
    """
    Cross-correlation with zero padding, computed as im2col followed by one matrix product.

    y[n, o, i, j] = b[o] + sum_{c, di, dj} w[o, c, di, dj] * x_pad[n, c, i*stride + di, j*stride + dj]

    Args:
        tape (Tape): Active tape.
        x (Tensor): Input (N, C_in, H, W).
        w (Tensor): Kernel (C_out, C_in, k, k).
        b (Tensor | None): Bias (C_out,).
        stride (int): Step between windows.
        padding (int | str): Zero padding per side, "same" (k // 2) or "valid" (0).

    Returns:
        Tensor: (N, C_out, H_out, W_out).

    Raises:
        ConfigurationError: On channel or kernel shape mismatch.
    """
    if x.data.ndim != 4 or w.data.ndim != 4 or w.shape[1] != x.shape[1] or w.shape[2] != w.shape[3]:
        raise ConfigurationError(f"conv2d shape mismatch: input {x.shape}, kernel {w.shape}")
    if b is not None and b.shape != (w.shape[0],):
        raise ConfigurationError(f"conv2d bias {b.shape} does not match {w.shape[0]} output channels")
    k = w.shape[2]
    n, c_out = x.shape[0], w.shape[0]
    pad = _resolve_padding(padding, k)
    xp = np.pad(x.data, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x.data
    if xp.shape[2] < k or xp.shape[3] < k:
        raise ConfigurationError(f"conv2d input {x.shape} is smaller than kernel {w.shape}")
    cols, h_out, w_out = _im2col(xp, k, stride)
    wmat = w.data.reshape(c_out, -1)
    out = np.ascontiguousarray((cols @ wmat.T).reshape(n, h_out, w_out, c_out).transpose(0, 3, 1, 2))
    if b is not None:
        out += b.data[None, :, None, None]
    parents = (x, w) if b is None else (x, w, b)

    def backward(g: Array) -> None:
        gmat = g.transpose(0, 2, 3, 1).reshape(-1, c_out)
        if w.requires_grad:
            w.accumulate((gmat.T @ cols).reshape(w.shape))
        if b is not None and b.requires_grad:
            b.accumulate(g.sum(axis=(0, 2, 3)))
        if x.requires_grad:
            dxp = _col2im(gmat @ wmat, xp.shape, k, stride, h_out, w_out)
            x.accumulate(dxp[:, :, pad : pad + x.shape[2], pad : pad + x.shape[3]])

    return tape.output(out, parents, backward)


def conv_transpose2d(tape: Tape, x: Tensor, w: Tensor, b: Tensor | None = None, stride: int = 2) -> Tensor:
    """
    Transposed convolution with kernel size equal to the stride, so output extents are multiplied by `stride`.

    It is the adjoint of `conv2d(..., stride=stride, padding=0)` with the same kernel array. Output blocks
    do not overlap, so forward and backward are each a single matrix product.

    Args:
        tape (Tape): Active tape.
        x (Tensor): Input (N, C_in, H, W).
        w (Tensor): Kernel (C_in, C_out, stride, stride).
        b (Tensor | None): Bias (C_out,).
        stride (int): Upsampling factor.

    Returns:
        Tensor: (N, C_out, stride * H, stride * W).
    """
    if x.data.ndim != 4 or w.data.ndim != 4 or w.shape[0] != x.shape[1] or w.shape[2:] != (stride, stride):
        raise ConfigurationError(f"conv_transpose2d shape mismatch: input {x.shape}, kernel {w.shape}")
    n, c_in, height, width = x.shape
    c_out = w.shape[1]
    if b is not None and b.shape != (c_out,):
        raise ConfigurationError(f"conv_transpose2d bias {b.shape} does not match {c_out} output channels")
    xmat = x.data.transpose(0, 2, 3, 1).reshape(-1, c_in)
    wmat = w.data.reshape(c_in, -1)
    out = (xmat @ wmat).reshape(n, height, width, c_out, stride, stride).transpose(0, 3, 1, 4, 2, 5)
    out = out.reshape(n, c_out, height * stride, width * stride)
    if b is not None:
        out = out + b.data[None, :, None, None]
    parents = (x, w) if b is None else (x, w, b)

    def backward(g: Array) -> None:
        blocks = g.reshape(n, c_out, height, stride, width, stride).transpose(0, 2, 4, 1, 3, 5)
        gmat = blocks.reshape(-1, c_out * stride * stride)
        _send(x, (gmat @ wmat.T).reshape(n, height, width, c_in).transpose(0, 3, 1, 2))
        _send(w, (xmat.T @ gmat).reshape(w.shape))
        if b is not None:
            _send(b, g.sum(axis=(0, 2, 3)))

    return tape.output(out, parents, backward)


def maxpool2(tape: Tape, x: Tensor) -> tuple[Tensor, Array]:
    """
    2x2 max pooling with stride 2.

    Returns:
        tuple[Tensor, NDArray]: Pooled tensor (N, C, H/2, W/2) and the argmax (0..3, row-major within each block).
            Ties resolve to the first maximum; the backward routes each gradient to that entry only.

    Raises:
        ConfigurationError: If H or W is odd.
    """
    n, c, height, width = x.shape
    if height % 2 or width % 2:
        raise ConfigurationError(f"maxpool2 needs even extents, got {x.shape}")
    blocks = x.data.reshape(n, c, height // 2, 2, width // 2, 2).transpose(0, 1, 2, 4, 3, 5)
    blocks = blocks.reshape(n, c, height // 2, width // 2, 4)
    argmax = blocks.argmax(axis=-1)
    out = np.take_along_axis(blocks, argmax[..., None], axis=-1)[..., 0]

    def backward(g: Array) -> None:
        routed = np.zeros((n, c, height // 2, width // 2, 4), dtype=g.dtype)
        np.put_along_axis(routed, argmax[..., None], g[..., None], axis=-1)
        grad = routed.reshape(n, c, height // 2, width // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5)
        _send(x, grad.reshape(n, c, height, width))

    return tape.output(out, (x,), backward), argmax


def concat(tape: Tape, tensors: Sequence[Tensor], axis: int = 1) -> Tensor:
    """Concatenation along `axis` (channels by default)."""
    if not tensors:
        raise ConfigurationError("concat needs at least one tensor")
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as e:
        raise ConfigurationError(f"concat shape mismatch: {[t.shape for t in tensors]}") from e
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(g: Array) -> None:
        for tensor, part in zip(tensors, np.split(g, bounds, axis=axis), strict=True):
            _send(tensor, part)

    return tape.output(out, tensors, backward)


def crop(tape: Tape, x: Tensor, height: int, width: int) -> Tensor:
    """Keeps the top-left (height, width) window of the last two axes."""
    if height > x.shape[-2] or width > x.shape[-1]:
        raise ConfigurationError(f"Cannot crop {x.shape} to ({height}, {width})")
    if (height, width) == x.shape[-2:]:
        return x

    def backward(g: Array) -> None:
        full = np.zeros_like(x.data)
        full[..., :height, :width] = g
        _send(x, full)

    return tape.output(x.data[..., :height, :width], (x,), backward)


def pad_to_multiple(x: Array, multiple: int) -> tuple[Array, tuple[int, int]]:
    """
    Edge-pads the last two axes of a plain array up to the next multiple.

    Returns:
        tuple[NDArray, tuple[int, int]]: Padded array and the original (H, W).
    """
    height, width = x.shape[-2:]
    pad_h = -height % multiple
    pad_w = -width % multiple
    if not pad_h and not pad_w:
        return x, (height, width)
    widths = [(0, 0)] * (x.ndim - 2) + [(0, pad_h), (0, pad_w)]
    return np.pad(x, widths, mode="edge"), (height, width)


def mse_loss(tape: Tape, pred: Tensor, target: Array, weight: Array | None = None) -> Tensor:
    """
    Mean squared error, optionally weighted (e.g. a 0/1 fluid mask broadcast against `pred`).

    Args:
        tape (Tape): Active tape.
        pred (Tensor): Prediction.
        target (NDArray): Target with the shape of `pred`.
        weight (NDArray | None): Non-negative weights broadcastable to `pred`.

    Returns:
        Tensor: Scalar loss; the gradient is 2 w (pred - target) / sum(w).
    """
    if target.shape != pred.shape:
        raise ConfigurationError(f"mse_loss shape mismatch: {pred.shape} vs {target.shape}")
    diff = pred.data - target
    if weight is None:
        scale = np.ones_like(diff)
    else:
        scale = np.broadcast_to(np.asarray(weight, dtype=diff.dtype), diff.shape)
    total = float(scale.sum())
    if total <= 0:
        raise ConfigurationError("mse_loss has no weighted elements")
    loss = np.asarray((scale * diff**2).sum() / total, dtype=pred.dtype)

    def backward(g: Array) -> None:
        _send(pred, (g * 2.0 * scale * diff / total).astype(pred.dtype))

    return tape.output(loss, (pred,), backward)


def attention_gate(
    tape: Tape, g: Tensor, x: Tensor, wg: Tensor, wx: Tensor, bias: Tensor, psi_w: Tensor, psi_b: Tensor
) -> Tensor:
    """
    Additive attention on a skip connection.

    a = sigmoid(psi(relu(Wg g + Wx x + b))), output = a * x with `a` broadcast over channels.

    Args:
        tape (Tape): Active tape.
        g (Tensor): Gating signal at the skip's resolution (N, C_g, H, W).
        x (Tensor): Skip features (N, C_x, H, W).
        wg (Tensor): 1x1 projection (F_int, C_g, 1, 1).
        wx (Tensor): 1x1 projection (F_int, C_x, 1, 1).
        bias (Tensor): Shared projection bias (F_int,).
        psi_w (Tensor): 1x1 projection to one channel (1, F_int, 1, 1).
        psi_b (Tensor): Bias of the coefficient map (1,).

    Returns:
        Tensor: Gated skip features, shape of `x`.

    Raises:
        ConfigurationError: If g and x differ in spatial extents.
    """
    if g.shape[0] != x.shape[0] or g.shape[2:] != x.shape[2:]:
        raise ConfigurationError(f"attention_gate: gating {g.shape} and skip {x.shape} are not aligned")
    projected = add(tape, conv2d(tape, g, wg, bias, padding=0), conv2d(tape, x, wx, padding=0))
    coefficients = sigmoid(tape, conv2d(tape, relu(tape, projected), psi_w, psi_b, padding=0))
    return multiply(tape, x, coefficients)
