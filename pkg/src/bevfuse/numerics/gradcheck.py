"""Central finite differences, the oracle for every reverse-mode gradient."""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor, no_grad


def finite_difference_grad(f: Callable[[Tensor], Tensor | float], x: Tensor, eps: float = 1e-6) -> np.ndarray:
    """Estimate df/dx coordinate by coordinate with central differences.

    ``f`` may return a Tensor or a float; ``x`` is perturbed in place and
    restored afterwards.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    flat = x.data.reshape(-1)
    grad = np.zeros(flat.shape, dtype=np.float64)
    with no_grad():
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            fp = _scalar(f(x))
            flat[i] = orig - eps
            fm = _scalar(f(x))
            flat[i] = orig
            if not (np.isfinite(fp) and np.isfinite(fm)):
                raise FloatingPointError(f"non-finite function value at coordinate {i}")
            grad[i] = (fp - fm) / (2.0 * eps)
    return grad.reshape(x.shape)


def _scalar(v) -> float:
    if isinstance(v, Tensor):
        return float(v.data.sum())
    return float(v)


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-5) -> float:
    """Max over elements of |a - n| / max(|a|, |n|, floor)."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    if a.size == 0:
        return 0.0
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / denom))


def check_gradients(
    loss_fn: Callable[[], Tensor],
    params: Sequence[tuple[str, Tensor]],
    eps: float = 1e-6,
    floor: float = 1e-5,
) -> dict[str, float]:
    """Compare reverse-mode gradients of ``loss_fn()`` against finite differences.

    Returns the max relative error per named parameter.
    """
    for _, p in params:
        p.grad = None
    loss = loss_fn()
    loss.backward()
    errors = {}
    for name, p in params:
        analytic = p.grad if p.grad is not None else np.zeros(p.shape)
        numeric = finite_difference_grad(lambda _: loss_fn(), p, eps)
        errors[name] = relative_error(analytic, numeric, floor)
    return errors
