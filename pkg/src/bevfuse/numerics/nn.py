"""Parameter containers: a tiny module system and the linear layer."""
from __future__ import annotations

import math
from typing import Iterator

import numpy as np

from . import ops
from .tensor import Tensor, get_default_dtype


def uniform_param(rng: np.random.Generator, shape, fan_in: int) -> Tensor:
    bound = 1.0 / math.sqrt(fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True, dtype=get_default_dtype())


def zeros_param(shape) -> Tensor:
    return Tensor(np.zeros(shape), requires_grad=True, dtype=get_default_dtype())


def ones_param(shape) -> Tensor:
    return Tensor(np.ones(shape), requires_grad=True, dtype=get_default_dtype())


class Module:
    """Walks attributes for parameters, sub-modules and lists/dicts of them.

    Attribute order is insertion order, so parameter names and ordering are
    stable across runs.
    """

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for name, value in vars(self).items():
            yield from _walk(value, f"{prefix}{name}")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        params = dict(self.named_parameters())
        missing = set(params) - set(state)
        extra = set(state) - set(params)
        if missing or extra:
            raise KeyError(f"state mismatch: missing={sorted(missing)} unexpected={sorted(extra)}")
        for k, p in params.items():
            arr = np.asarray(state[k])
            if arr.shape != p.shape:
                raise ValueError(f"{k}: shape {arr.shape} != {p.shape}")
            p.data = arr.astype(p.dtype, copy=True)

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def astype(self, dtype) -> "Module":
        for p in self.parameters():
            p.data = p.data.astype(dtype)
            p.grad = None
        return self

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())


def _walk(value, name: str):
    if isinstance(value, Tensor):
        if value.requires_grad:
            yield name, value
    elif isinstance(value, Module):
        yield from value.named_parameters(prefix=name + ".")
    elif isinstance(value, (list, tuple)):
        for i, v in enumerate(value):
            yield from _walk(v, f"{name}.{i}")
    elif isinstance(value, dict):
        for k, v in value.items():
            yield from _walk(v, f"{name}.{k}")


class Linear(Module):
    """``y = x @ weight.T + bias`` with weight stored as [out, in]."""

    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator, zero_init: bool = False):
        self.in_features = in_features
        self.out_features = out_features
        if zero_init:
            self.weight = zeros_param((out_features, in_features))
            self.bias = zeros_param((out_features,))
        else:
            self.weight = uniform_param(rng, (out_features, in_features), in_features)
            self.bias = uniform_param(rng, (out_features,), in_features)

    def __call__(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.in_features:
            raise ValueError(f"Linear expects last dim {self.in_features}, got {x.shape}")
        return x @ self.weight.T + self.bias


class LayerNorm(Module):
    def __init__(self, dim: int):
        self.gain = ones_param((dim,))
        self.bias = zeros_param((dim,))

    def __call__(self, x: Tensor) -> Tensor:
        return ops.layer_norm(x, self.gain, self.bias)


class FFN(Module):
    """Two linear layers with GELU between: dim -> hidden -> out."""

    def __init__(self, dim: int, hidden: int, rng: np.random.Generator, out: int | None = None):
        self.fc1 = Linear(dim, hidden, rng)
        self.fc2 = Linear(hidden, out or dim, rng)

    def __call__(self, x: Tensor) -> Tensor:
        return self.fc2(ops.gelu(self.fc1(x)))
