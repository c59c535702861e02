"""Decoupled-weight-decay Adam with a triangular cyclic step size."""
from __future__ import annotations

import numpy as np

from .numerics import Tensor


def triangular_lr(step: int, lr_min: float, lr_max: float, cycle_steps: int) -> float:
    """Rises linearly from lr_min to lr_max over half a cycle, then falls back."""
    if cycle_steps < 2:
        return lr_max
    pos = (step % cycle_steps) / cycle_steps
    frac = 2 * pos if pos < 0.5 else 2 * (1 - pos)
    return lr_min + (lr_max - lr_min) * frac


class AdamW:
    """Parameters without a gradient this step are left untouched (no decay, no moment update)."""

    def __init__(self, params: list[tuple[str, Tensor]], weight_decay: float = 0.05, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8, grad_clip: float | None = None):
        self.params = list(params)
        self.weight_decay = weight_decay
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.grad_clip = grad_clip
        self.state: dict[str, dict[str, np.ndarray]] = {}

    def grad_norm(self) -> float:
        sq = sum(float(np.sum(p.grad.astype(np.float64) ** 2)) for _, p in self.params if p.grad is not None)
        return sq**0.5

    def step(self, lr: float) -> None:
        scale = 1.0
        if self.grad_clip:
            norm = self.grad_norm()
            if norm > self.grad_clip:
                scale = self.grad_clip / norm
        for name, p in self.params:
            if p.grad is None:
                continue
            g = p.grad * scale
            st = self.state.get(name)
            if st is None:
                st = {"m": np.zeros_like(p.data), "v": np.zeros_like(p.data), "t": np.zeros((), dtype=np.int64)}
                self.state[name] = st
            st["t"] = st["t"] + 1
            t = int(st["t"])
            st["m"] = self.beta1 * st["m"] + (1 - self.beta1) * g
            st["v"] = self.beta2 * st["v"] + (1 - self.beta2) * g * g
            mhat = st["m"] / (1 - self.beta1**t)
            vhat = st["v"] / (1 - self.beta2**t)
            update = mhat / (np.sqrt(vhat) + self.eps) + self.weight_decay * p.data
            p.data = (p.data - lr * update).astype(p.data.dtype)

    def zero_grad(self) -> None:
        for _, p in self.params:
            p.grad = None

    def state_arrays(self) -> dict[str, np.ndarray]:
        """Flat ``name/slot`` arrays for serialization."""
        out = {}
        for name in sorted(self.state):
            for slot in ("m", "v", "t"):
                out[f"{name}/{slot}"] = np.asarray(self.state[name][slot])
        return out

    def load_state_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        names = {n for n, _ in self.params}
        state: dict[str, dict[str, np.ndarray]] = {}
        for key, arr in arrays.items():
            name, _, slot = key.rpartition("/")
            if name not in names or slot not in ("m", "v", "t"):
                raise KeyError(f"optimizer state entry {key!r} matches no parameter slot")
            state.setdefault(name, {})[slot] = np.array(arr)
        for name, st in state.items():
            if set(st) != {"m", "v", "t"}:
                raise KeyError(f"incomplete optimizer state for {name!r}")
        self.state = state
