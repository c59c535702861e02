"""Meta-BEV queries refined by modality-arbitrary deformable attention.

Each cross layer holds one offset/weight head pair per modality. Whatever
subset of modalities is present, their sampled values compete in a single
softmax per (query, head). Self layers use one unified head pair and read
from the query raster itself.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import BEVGrid, GridSpec
from .moe import make_ffn
from .numerics import LayerNorm, Linear, Module, Tensor, concat, grouped_bilinear_sample, softmax
from .numerics.nn import uniform_param

MODALITIES = ("camera", "lidar")


def make_reference_points(X: int, Y: int) -> np.ndarray:
    """Normalized cell centers ((j + 0.5) / Y, (i + 0.5) / X), row-major over (i, j)."""
    if X < 1 or Y < 1:
        raise ValueError("grid extents must be >= 1")
    i, j = np.meshgrid(np.arange(X), np.arange(Y), indexing="ij")
    return np.stack([(j.ravel() + 0.5) / Y, (i.ravel() + 0.5) / X], axis=-1)


class SamplingHeads(Module):
    """Offsets (M*K*2, in cells) and attention logits (M*K) from a query."""

    def __init__(self, dim: int, n_heads: int, n_points: int, rng: np.random.Generator, zero_init: bool = True):
        self.offsets = Linear(dim, n_heads * n_points * 2, rng, zero_init=zero_init)
        self.weights = Linear(dim, n_heads * n_points, rng, zero_init=zero_init)


class DeformAttnLayer(Module):
    """Pre-norm block: deformable attention then an FFN slot, each with a residual."""

    def __init__(self, dim: int, n_heads: int, n_points: int, modalities: tuple[str, ...], rng: np.random.Generator,
                 ffn_kind: str = "plain", hidden: int | None = None, n_experts: int = 8, top_t: int = 2,
                 zero_init_heads: bool = True, balance_loss: bool = False):
        if dim % n_heads:
            raise ValueError(f"dim {dim} not divisible by {n_heads} heads")
        self.dim = dim
        self.n_heads = n_heads
        self.n_points = n_points
        self.modalities = tuple(modalities)
        self.heads = {m: SamplingHeads(dim, n_heads, n_points, rng, zero_init_heads) for m in self.modalities}
        self.value_proj = Linear(dim, dim, rng)
        self.output_proj = Linear(dim, dim, rng)
        self.norm_attn = LayerNorm(dim)
        self.norm_ffn = LayerNorm(dim)
        self.ffn = make_ffn(ffn_kind, dim, hidden or 2 * dim, rng, n_experts, top_t, balance_loss)
        self.last_weights: np.ndarray | None = None

    def attend(self, query: Tensor, pos: Tensor, ref: np.ndarray, values: dict[str, Tensor]) -> Tensor:
        """Projected attention output (Q, Dm), without residual.

        ``values`` maps each present modality to a (Dm, X, Y) tensor;
        iteration follows this layer's modality order.
        """
        M, K, D = self.n_heads, self.n_points, self.dim
        dh = D // M
        Q = query.shape[0]
        qp = query + pos
        present = [m for m in self.modalities if m in values]
        sampled, logits = [], []
        for m in present:
            v = values[m]
            _, X, Y = v.shape
            heads = self.heads[m]
            off = heads.offsets(qp).reshape(Q, M, K, 2)
            logits.append(heads.weights(qp).reshape(Q, M, K))
            proj = self.value_proj(v.reshape(D, X * Y).transpose(1, 0))  # (XY, D)
            grid = proj.transpose(1, 0).reshape(M, dh, X, Y)
            base = np.stack([ref[:, 0] * Y - 0.5, ref[:, 1] * X - 0.5], axis=-1)  # (Q, 2)
            pts = off + Tensor(base[:, None, None, :], dtype=off.dtype.type)
            pts = pts.transpose(1, 0, 2, 3).reshape(M, Q * K, 2)
            sampled.append(grouped_bilinear_sample(grid, pts).reshape(M, Q, K, dh))
        samples = sampled[0] if len(sampled) == 1 else concat(sampled, axis=2)
        joint = logits[0] if len(logits) == 1 else concat(logits, axis=-1)
        weights = softmax(joint, axis=-1)  # (Q, M, K_total)
        self.last_weights = weights.data
        w = weights.transpose(1, 0, 2).reshape(M, Q, -1, 1)
        heads_out = (samples * w).sum(axis=2)  # (M, Q, dh)
        return self.output_proj(heads_out.transpose(1, 0, 2).reshape(Q, D))

    def feed_forward(self, q: Tensor, tasks) -> Tensor:
        return q + self.ffn(self.norm_ffn(q), tasks)

    def cross(self, q: Tensor, pos: Tensor, ref: np.ndarray, feats: dict[str, Tensor], tasks) -> Tensor:
        q = q + self.attend(self.norm_attn(q), pos, ref, feats)
        return self.feed_forward(q, tasks)

    def self_attend(self, q: Tensor, pos: Tensor, ref: np.ndarray, X: int, Y: int, tasks) -> Tensor:
        qn = self.norm_attn(q)
        raster = qn.transpose(1, 0).reshape(self.dim, X, Y)
        q = q + self.attend(qn, pos, ref, {self.modalities[0]: raster})
        return self.feed_forward(q, tasks)


@dataclass
class DecoderConfig:
    X: int = 40
    Y: int = 40
    dim: int = 64
    n_heads: int = 8
    n_points: int = 8
    n_cross: int = 4
    n_self: int = 2
    ffn: str = "plain"
    ffn_per_layer: list[str] | None = None
    hidden: int = 128
    n_experts: int = 8
    top_t: int = 2
    balance_loss: bool = False
    zero_init_heads: bool = True
    modalities: tuple[str, ...] = field(default_factory=lambda: MODALITIES)

    def layer_ffn(self, k: int) -> str:
        if self.ffn_per_layer is not None:
            return self.ffn_per_layer[k]
        return self.ffn


class Decoder(Module):
    """Learnable meta-BEV queries, N cross layers, then M self layers."""

    def __init__(self, cfg: DecoderConfig, rng: np.random.Generator):
        if cfg.n_cross < 1:
            raise ValueError("decoder needs at least one cross-modal layer")
        n_layers = cfg.n_cross + cfg.n_self
        if cfg.ffn_per_layer is not None and len(cfg.ffn_per_layer) != n_layers:
            raise ValueError(f"ffn_per_layer needs {n_layers} entries")
        self.cfg = cfg
        Q = cfg.X * cfg.Y
        self.queries = uniform_param(rng, (Q, cfg.dim), cfg.dim)
        self.pos_embed = uniform_param(rng, (Q, cfg.dim), cfg.dim)
        common = dict(hidden=cfg.hidden, n_experts=cfg.n_experts, top_t=cfg.top_t,
                      zero_init_heads=cfg.zero_init_heads, balance_loss=cfg.balance_loss)
        self.cross_layers = [
            DeformAttnLayer(cfg.dim, cfg.n_heads, cfg.n_points, cfg.modalities, rng, cfg.layer_ffn(k), **common)
            for k in range(cfg.n_cross)
        ]
        self.self_layers = [
            DeformAttnLayer(cfg.dim, cfg.n_heads, cfg.n_points, ("self",), rng, cfg.layer_ffn(cfg.n_cross + k), **common)
            for k in range(cfg.n_self)
        ]
        self.out_norm = LayerNorm(cfg.dim)
        self.ref = make_reference_points(cfg.X, cfg.Y)

    def check_feats(self, feats: dict[str, BEVGrid | Tensor], modalities=None) -> dict[str, Tensor]:
        if not feats:
            raise ValueError("no modality: the decoder needs at least one BEV input")
        unknown = set(feats) - set(self.cfg.modalities)
        if unknown:
            raise ValueError(f"unknown modality {sorted(unknown)}")
        use = tuple(feats) if modalities is None else tuple(modalities)
        if not use:
            raise ValueError("no modality: the decoder needs at least one BEV input")
        out = {}
        for m in use:
            if m not in self.cfg.modalities:
                raise ValueError(f"unknown modality {m!r}")
            if m not in feats:
                raise ValueError(f"modality {m!r} listed but not supplied")
            g = feats[m].data if isinstance(feats[m], BEVGrid) else feats[m]
            if g.shape != (self.cfg.dim, self.cfg.X, self.cfg.Y):
                raise ValueError(f"{m} BEV shape {g.shape} != {(self.cfg.dim, self.cfg.X, self.cfg.Y)}")
            out[m] = g
        return out

    def evolve(self, feats: dict[str, BEVGrid | Tensor], modalities=None, tasks=("det", "seg")) -> Tensor:
        """Updated queries (Q, Dm) after all cross and self layers."""
        values = self.check_feats(feats, modalities)
        q = self.queries
        for layer in self.cross_layers:
            q = layer.cross(q, self.pos_embed, self.ref, values, tasks)
        for layer in self.self_layers:
            q = layer.self_attend(q, self.pos_embed, self.ref, self.cfg.X, self.cfg.Y, tasks)
        return self.out_norm(q)

    def __call__(self, feats, modalities=None, tasks=("det", "seg"), grid: GridSpec | None = None) -> BEVGrid:
        q = self.evolve(feats, modalities, tasks)
        cfg = self.cfg
        fused = q.transpose(1, 0).reshape(cfg.dim, cfg.X, cfg.Y)
        return BEVGrid(fused, grid or GridSpec(cfg.X, cfg.Y))

    def aux_losses(self) -> list[Tensor]:
        out = []
        for layer in self.cross_layers + self.self_layers:
            aux = getattr(layer.ffn, "last_aux_loss", None)
            if aux is not None:
                out.append(aux)
        return out


def cross_modal_deform_attn(queries: Tensor, pos: Tensor, ref: np.ndarray, feats: dict[str, BEVGrid | Tensor],
                            layer: DeformAttnLayer, tasks=("det", "seg")) -> Tensor:
    """One cross layer over whichever modalities ``feats`` holds."""
    if not feats:
        raise ValueError("no modality: the decoder needs at least one BEV input")
    unknown = set(feats) - set(layer.modalities)
    if unknown:
        raise ValueError(f"unknown modality {sorted(unknown)}")
    values = {m: (g.data if isinstance(g, BEVGrid) else g) for m, g in feats.items()}
    return layer.cross(queries, pos, ref, values, tasks)


def self_deform_attn(queries: Tensor, pos: Tensor, ref: np.ndarray, X: int, Y: int, layer: DeformAttnLayer,
                     tasks=("det", "seg")) -> Tensor:
    return layer.self_attend(queries, pos, ref, X, Y, tasks)
