# Copyright (c) 2025 CoReason, Inc.
#
# This software is proprietary and dual-licensed.
# Licensed under the Prosperity Public License 3.0 (the "License").
# A copy of the license is available at https://prosperitylicense.com/versions/3.0.0
# For details, see the LICENSE file.
# Commercial use beyond a 30-day trial requires a separate license.
#
# Source Code: https://github.com/CoReason-AI/texflow

from collections.abc import Callable, Sequence

import numpy as np

from texflow.nn.tensor import Tape, Tensor

"""
Finite-difference verification of backward passes.
"""


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """max|a - n| / max(max|n|, max|a|, 1e-12)."""
    scale = max(float(np.abs(numeric).max(initial=0.0)), float(np.abs(analytic).max(initial=0.0)), 1e-12)
    return float(np.abs(analytic - numeric).max(initial=0.0)) / scale


def grad_check(
    fn: Callable[[Tape], Tensor], inputs: Sequence[Tensor], eps: float = 1e-3, seed: int = 0
) -> list[float]:
    """
    Compares reverse-mode gradients of `fn` with central finite differences.

    The output is reduced to a scalar through a fixed random projection, so every output entry is checked.
    Use float64 inputs; float32 round-off dominates any eps.

    Args:
        fn (Callable[[Tape], Tensor]): Builds the graph on the given tape from `inputs`.
        inputs (Sequence[Tensor]): Tensors to differentiate; they must have `requires_grad=True`.
        eps (float): Central-difference step.
        seed (int): Seed of the projection.

    Returns:
        list[float]: Relative error per input, see `relative_error`.
    """
    tape = Tape()
    for tensor in inputs:
        tensor.zero_grad()
    out = fn(tape)
    projection = np.random.default_rng(seed).standard_normal(out.shape)
    tape.backward(out, projection)
    analytic = [t.grad.copy() if t.grad is not None else np.zeros_like(t.data) for t in inputs]

    def objective() -> float:
        return float((fn(Tape(enabled=False)).data * projection).sum())

    errors = []
    for tensor, grad in zip(inputs, analytic, strict=True):
        tensor.data = np.ascontiguousarray(tensor.data)
        numeric = np.zeros_like(tensor.data)
        flat = tensor.data.reshape(-1)
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + eps
            plus = objective()
            flat[i] = original - eps
            minus = objective()
            flat[i] = original
            numeric.reshape(-1)[i] = (plus - minus) / (2 * eps)
        errors.append(relative_error(grad, numeric))
        tensor.zero_grad()
    return errors
