# Copyright (c) 2025 CoReason, Inc.
#
# This software is proprietary and dual-licensed.
# Licensed under the Prosperity Public License 3.0 (the "License").
# A copy of the license is available at https://prosperitylicense.com/versions/3.0.0
# For details, see the LICENSE file.
# Commercial use beyond a 30-day trial requires a separate license.
#
# Source Code: https://github.com/CoReason-AI/texflow

from dataclasses import dataclass, field

import numpy as np

from texflow.nn.tensor import Array, ParameterStore

"""
Adam with bias correction.
"""


@dataclass
class AdamState:
    """
    Per-parameter moment estimates.

    Attributes:
        lr (float): Learning rate.
        beta1 (float): Decay of the first moment.
        beta2 (float): Decay of the second moment.
        eps (float): Denominator offset.
        step (int): Number of updates applied.
        m (dict[str, NDArray]): First moments by parameter name.
        v (dict[str, NDArray]): Second moments by parameter name.
    """

    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, Array] = field(default_factory=dict)
    v: dict[str, Array] = field(default_factory=dict)


def adam_step(params: ParameterStore, state: AdamState) -> None:
    """
    Applies one Adam update in place and zeroes the gradients.

    Parameters without a gradient are treated as having a zero gradient.

    Args:
        params (ParameterStore): Parameters with accumulated gradients.
        state (AdamState): Optimizer state, advanced by one step.
    """
    state.step += 1
    bc1 = 1.0 - state.beta1**state.step
    bc2 = 1.0 - state.beta2**state.step
    for name, param in params.items():
        grad = param.grad if param.grad is not None else np.zeros_like(param.data)
        if name not in state.m:
            state.m[name] = np.zeros_like(param.data)
            state.v[name] = np.zeros_like(param.data)
        m, v = state.m[name], state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * grad
        v *= state.beta2
        v += (1.0 - state.beta2) * (grad * grad)
        update = (state.lr / bc1) * m / (np.sqrt(v / bc2) + state.eps)
        param.data -= update.astype(param.dtype)
    params.zero_grad()
