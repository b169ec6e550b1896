# Copyright (c) 2025 CoReason, Inc.
#
# This software is proprietary and dual-licensed.
# Licensed under the Prosperity Public License 3.0 (the "License").
# A copy of the license is available at https://prosperitylicense.com/versions/3.0.0
# For details, see the LICENSE file.
# Commercial use beyond a 30-day trial requires a separate license.
#
# Source Code: https://github.com/CoReason-AI/texflow

from collections.abc import Callable, Iterator, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from texflow.exceptions import ConfigurationError

"""
Tensors, the operation tape and named parameter storage.
"""

Array = NDArray[np.floating]
Backward = Callable[[Array], None]


class Tensor:
    """
    A numpy array with an optional gradient slot.

    Attributes:
        data (NDArray): Values.
        grad (NDArray | None): Accumulated gradient, same shape as `data`.
        requires_grad (bool): Whether backward passes accumulate into `grad`.
        name (str | None): Parameter name, if any.
        touched (bool): Set once a backward pass has reached this tensor.
    """

    __slots__ = ("data", "grad", "requires_grad", "name", "touched")

    def __init__(self, data: ArrayLike, requires_grad: bool = False, name: str | None = None) -> None:
        self.data: Array = np.asarray(data)
        if not np.issubdtype(self.data.dtype, np.floating):
            self.data = self.data.astype(np.float64)
        self.grad: Array | None = None
        self.requires_grad = requires_grad
        self.name = name
        self.touched = False

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.data.shape)

    @property
    def dtype(self) -> np.dtype[np.floating]:
        return self.data.dtype

    @property
    def size(self) -> int:
        return int(self.data.size)

    def item(self) -> float:
        return float(self.data)

    def accumulate(self, grad: Array) -> None:
        if grad.shape != self.data.shape:
            raise ConfigurationError(f"Gradient shape {grad.shape} does not match tensor shape {self.data.shape}")
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += grad
        self.touched = True

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        label = f"'{self.name}', " if self.name else ""
        return f"Tensor({label}shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad})"


class Tape:
    """
    Records backward closures of one forward pass.

    A disabled tape (evaluation mode) records nothing, so outputs never require gradients.
    """

    def __init__(self, enabled: bool = True) -> None:
        self.enabled = enabled
        self._records: list[tuple[Tensor, Backward]] = []

    def __len__(self) -> int:
        return len(self._records)

    def wants_grad(self, *parents: Tensor) -> bool:
        return self.enabled and any(p.requires_grad for p in parents)

    def output(self, data: Array, parents: Sequence[Tensor], backward: Backward) -> Tensor:
        """
        Wraps an op result and records its backward closure when any parent needs gradients.

        Args:
            data (NDArray): Forward result.
            parents (Sequence[Tensor]): Op inputs.
            backward (Callable): Receives the output gradient and accumulates into the parents.

        Returns:
            Tensor: The output tensor.
        """
        out = Tensor(data, requires_grad=self.wants_grad(*parents))
        if out.requires_grad:
            self._records.append((out, backward))
        return out

    def backward(self, out: Tensor, seed: ArrayLike | None = None) -> None:
        """
        Propagates gradients from `out` to every recorded tensor.

        Args:
            out (Tensor): Final tensor of the forward pass.
            seed (ArrayLike | None): Upstream gradient; defaults to one for scalar outputs.

        Raises:
            ConfigurationError: If no seed is given for a non-scalar output.
        """
        if seed is None:
            if out.size != 1:
                raise ConfigurationError(f"backward of a non-scalar tensor {out.shape} needs a seed gradient")
            seed = np.ones_like(out.data)
        out.accumulate(np.asarray(seed, dtype=out.dtype).reshape(out.shape))
        for tensor, backward in reversed(self._records):
            if tensor.grad is not None:
                backward(tensor.grad)
        self._records.clear()


class ParameterStore:
    """
    Ordered, uniquely named trainable tensors.
    """

    def __init__(self) -> None:
        self._params: dict[str, Tensor] = {}

    def add(self, name: str, data: ArrayLike) -> Tensor:
        """
        Raises:
            ConfigurationError: If the name is already taken.
        """
        if name in self._params:
            raise ConfigurationError(f"Duplicate parameter name '{name}'")
        tensor = Tensor(np.array(data, copy=True), requires_grad=True, name=name)
        self._params[name] = tensor
        return tensor

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: object) -> bool:
        return name in self._params

    def __iter__(self) -> Iterator[str]:
        return iter(self._params)

    def __len__(self) -> int:
        return len(self._params)

    def items(self) -> Iterator[tuple[str, Tensor]]:
        return iter(self._params.items())

    def names(self) -> list[str]:
        return list(self._params)

    @property
    def n_parameters(self) -> int:
        return sum(p.size for p in self._params.values())

    def zero_grad(self) -> None:
        for param in self._params.values():
            param.zero_grad()

    def reset_touched(self) -> None:
        for param in self._params.values():
            param.touched = False

    def untouched(self) -> list[str]:
        """Names of parameters no backward pass has reached since the last reset."""
        return [name for name, param in self._params.items() if not param.touched]

    def state(self) -> dict[str, Array]:
        return {name: param.data.copy() for name, param in self._params.items()}

    def load_state(self, arrays: dict[str, Array]) -> None:
        """
        Copies arrays into the matching parameters, keeping each parameter's dtype.

        Raises:
            ConfigurationError: If names or shapes disagree.
        """
        if set(arrays) != set(self._params):
            missing = sorted(set(self._params) - set(arrays))
            extra = sorted(set(arrays) - set(self._params))
            raise ConfigurationError(f"Parameter mismatch: missing {missing}, unexpected {extra}")
        for name, param in self._params.items():
            if arrays[name].shape != param.shape:
                raise ConfigurationError(f"Shape mismatch for '{name}': {arrays[name].shape} vs {param.shape}")
            param.data = np.asarray(arrays[name], dtype=param.dtype).copy()
