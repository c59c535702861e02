"""Expert feed-forward blocks for the decoder's FFN slot.

``ExpertBank`` routes each token to its top-t experts and mixes their
outputs with renormalized gates. ``HardMoE`` is the two-expert variant with
no router: one FFN per task, fused when both tasks are active.
"""
from __future__ import annotations

import numpy as np

from .numerics import FFN, LayerNorm, Linear, Module, Tensor, as_tensor, concat, index_add, softmax
from .numerics import take_along_last, take_rows
from .numerics.tensor import zeros

TASKS = ("det", "seg")


def route_top_t(logits: Tensor, t: int) -> tuple[np.ndarray, Tensor]:
    """Select the t largest logits per row (ties -> lower index) and softmax over them.

    ``logits`` is (E,) or (tokens, E). Returns integer indices and gates of
    matching leading shape with trailing size t.
    """
    logits = as_tensor(logits)
    E = logits.shape[-1]
    if not 1 <= t <= E:
        raise ValueError(f"top-t needs 1 <= t <= E, got t={t}, E={E}")
    if not np.all(np.isfinite(logits.data)):
        raise ValueError("router logits must be finite")
    order = np.argsort(-logits.data, axis=-1, kind="stable")
    idx = order[..., :t]
    gates = softmax(take_along_last(logits, idx), axis=-1)
    return idx, gates


class PlainFFN(FFN):
    """Two-layer GELU FFN that ignores the task flags."""

    def __call__(self, x: Tensor, tasks=None) -> Tensor:  # noqa: ARG002
        return super().__call__(x)


class ExpertBank(Module):
    def __init__(self, dim: int, hidden: int, n_experts: int, top_t: int, rng: np.random.Generator,
                 balance_loss: bool = False):
        if not 1 <= top_t <= n_experts:
            raise ValueError(f"need 1 <= t <= E, got t={top_t}, E={n_experts}")
        self.top_t = top_t
        self.balance_loss = balance_loss
        self.router = Linear(dim, n_experts, rng)
        self.experts = [FFN(dim, hidden, rng) for _ in range(n_experts)]
        self.last_aux_loss: Tensor | None = None
        self.last_routing: np.ndarray | None = None

    @property
    def n_experts(self) -> int:
        return len(self.experts)

    def __call__(self, x: Tensor, tasks=None) -> Tensor:  # noqa: ARG002
        return rm2oe_forward(x, self)


def rm2oe_forward(x: Tensor, bank: ExpertBank) -> Tensor:
    """Per token: sum of gate_i * expert_{idx_i}(x) over the selected experts only."""
    x = as_tensor(x)
    lead = x.shape[:-1]
    D = x.shape[-1]
    tokens = x.reshape(-1, D)
    logits = bank.router(tokens)
    idx, gates = route_top_t(logits, bank.top_t)
    bank.last_routing = idx
    out = zeros(tokens.shape, dtype=tokens.dtype.type)
    for e, expert in enumerate(bank.experts):
        rows, slots = np.nonzero(idx == e)
        if len(rows) == 0:
            continue
        y = expert(take_rows(tokens, rows))
        g = gates[rows, slots].reshape(-1, 1)
        out = index_add(out, rows, y * g)
    if bank.balance_loss:
        probs = softmax(logits, axis=-1).mean(axis=0)
        frac = np.bincount(idx.reshape(-1), minlength=bank.n_experts) / idx.size
        bank.last_aux_loss = (probs * frac).sum() * float(bank.n_experts)
    else:
        bank.last_aux_loss = None
    return out.reshape(*lead, D)


class HardMoE(Module):
    def __init__(self, dim: int, hidden: int, rng: np.random.Generator):
        self.det_expert = FFN(dim, hidden, rng)
        self.seg_expert = FFN(dim, hidden, rng)
        self.fusion = Linear(2 * dim, dim, rng)
        self.norm = LayerNorm(dim)

    def __call__(self, x: Tensor, tasks=TASKS) -> Tensor:
        return hm2oe_forward(x, self, tasks)


def hm2oe_forward(x: Tensor, hmoe: HardMoE, tasks=TASKS) -> Tensor:
    """det-only -> det expert; seg-only -> seg expert; both -> norm(fusion([det, seg]))."""
    tasks = set(tasks or ())
    unknown = tasks - set(TASKS)
    if unknown:
        raise ValueError(f"unknown task flags {sorted(unknown)}")
    if not tasks:
        raise ValueError("at least one task flag must be set")
    if tasks == {"det"}:
        return hmoe.det_expert(x)
    if tasks == {"seg"}:
        return hmoe.seg_expert(x)
    fused = hmoe.fusion(concat([hmoe.det_expert(x), hmoe.seg_expert(x)], axis=-1))
    return hmoe.norm(fused)


def make_ffn(kind: str, dim: int, hidden: int, rng: np.random.Generator, n_experts: int = 8, top_t: int = 2,
             balance_loss: bool = False):
    """Build an FFN slot: ``plain``, ``rmoe`` (routed experts) or ``hmoe`` (hard two-task experts)."""
    if kind == "plain":
        return PlainFFN(dim, hidden, rng)
    if kind == "rmoe":
        return ExpertBank(dim, hidden, n_experts, top_t, rng, balance_loss)
    if kind == "hmoe":
        return HardMoE(dim, hidden, rng)
    raise ValueError(f"unknown FFN kind {kind!r}")
