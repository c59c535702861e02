"""Per-cell MLP heads on the fused BEV raster and their training losses."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .encoders import Conv1x1Stack
from .grid import BEVGrid, GridSpec
from .numerics import Module, Tensor, as_tensor, bce_with_logits
from .world import Box, GroundTruth

REG_CHANNELS = ("dx", "dy", "width", "length", "yaw")
DET_WEIGHT = 10.0
SEG_WEIGHT = 1.0
HEATMAP_PRIOR = 0.1
REG_PRIOR = (0.0, 0.0, 2.2, 5.5, 0.0)  # typical width and length in meters


@dataclass
class SegPrediction:
    logits: Tensor  # (n_classes, X, Y)

    def masks(self, threshold: float = 0.5) -> np.ndarray:
        return 1.0 / (1.0 + np.exp(-self.logits.data)) > threshold


@dataclass
class DetPrediction:
    heatmap: Tensor  # (n_classes, X, Y) logits
    regression: Tensor  # (5, X, Y)

    def __post_init__(self):
        if not np.all(np.isfinite(self.heatmap.data)):
            raise ValueError("heatmap logits must be finite")
        if self.regression.shape[0] != len(REG_CHANNELS):
            raise ValueError(f"regression needs {len(REG_CHANNELS)} channels")


class SegHead(Module):
    def __init__(self, dim: int, hidden: int, n_classes: int, rng: np.random.Generator):
        self.mlp = Conv1x1Stack([dim, hidden, n_classes], rng)

    def __call__(self, bev: BEVGrid | Tensor) -> SegPrediction:
        x = bev.data if isinstance(bev, BEVGrid) else bev
        return SegPrediction(self.mlp(x))


class DetHead(Module):
    """Center heatmap (bias starts at a low prior) plus box regression."""

    def __init__(self, dim: int, hidden: int, n_classes: int, rng: np.random.Generator):
        self.heat = Conv1x1Stack([dim, hidden, n_classes], rng)
        self.heat.layers[-1].bias.data[:] = -math.log((1 - HEATMAP_PRIOR) / HEATMAP_PRIOR)
        self.reg = Conv1x1Stack([dim, hidden, len(REG_CHANNELS)], rng)
        self.reg.layers[-1].bias.data[:] = REG_PRIOR

    def __call__(self, bev: BEVGrid | Tensor) -> DetPrediction:
        x = bev.data if isinstance(bev, BEVGrid) else bev
        return DetPrediction(self.heat(x), self.reg(x))


# ------------------------------------------------------------------ losses
def seg_loss(pred: SegPrediction | Tensor, gt_masks) -> Tensor:
    """Mean per-cell, per-class binary cross-entropy on logits."""
    logits = pred.logits if isinstance(pred, SegPrediction) else as_tensor(pred)
    gt = np.asarray(gt_masks)
    if logits.shape != gt.shape:
        raise ValueError(f"seg logits {logits.shape} vs masks {gt.shape}")
    return bce_with_logits(logits, gt.astype(np.float64)).mean()


def focal_heatmap_loss(logits: Tensor, target: np.ndarray, alpha: float = 2.0, beta: float = 4.0) -> Tensor:
    """Penalty-reduced focal loss on a Gaussian-splatted heatmap, summed over classes, averaged over cells.

    Averaging over cells (rather than dividing by the number of peaks) puts
    the per-cell gradient on the same footing as the segmentation loss.
    """
    target = np.asarray(target, dtype=np.float64)
    if logits.shape != target.shape:
        raise ValueError(f"heatmap {logits.shape} vs target {target.shape}")
    pos = target >= 1.0 - 1e-6
    dt = logits.dtype.type
    p = logits.sigmoid()
    log_p = -(-logits).softplus()
    log_1mp = -logits.softplus()
    pos_w = Tensor(pos.astype(np.float64), dtype=dt)
    neg_w = Tensor((~pos) * (1.0 - target) ** beta, dtype=dt)
    pos_term = pos_w * (1.0 - p) ** alpha * log_p
    neg_term = neg_w * p**alpha * log_1mp
    n_cells = target.shape[-1] * target.shape[-2]
    return -(pos_term + neg_term).sum() / float(n_cells)


def regression_l1(regression: Tensor, target: np.ndarray, mask: np.ndarray) -> Tensor:
    """L1 on the five box targets at center cells, averaged over all cells and channels.

    Non-center cells contribute zero, so an empty scene gives exactly 0.
    """
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        return Tensor(0.0, dtype=regression.dtype.type)
    i, j = np.nonzero(mask)
    diff = regression[:, i, j] - Tensor(np.asarray(target)[:, i, j], dtype=regression.dtype.type)
    return diff.abs().sum() / float(mask.size * len(REG_CHANNELS))


def det_loss(pred: DetPrediction, gt: GroundTruth) -> Tensor:
    return focal_heatmap_loss(pred.heatmap, gt.heatmap) + regression_l1(pred.regression, gt.regression, gt.reg_mask)


def joint_loss(seg: SegPrediction | None, det: DetPrediction | None, gt: GroundTruth,
               w_det: float = DET_WEIGHT, w_seg: float = SEG_WEIGHT) -> tuple[Tensor, dict[str, float]]:
    """``w_det * det + w_seg * seg`` over whichever heads are active, plus float parts for logging."""
    if seg is None and det is None:
        raise ValueError("at least one head must be active")
    total = None
    parts = {}
    if det is not None:
        d = det_loss(det, gt)
        parts["det"] = float(d.data)
        total = d * w_det
    if seg is not None:
        s = seg_loss(seg, gt.seg_mask)
        parts["seg"] = float(s.data)
        total = s * w_seg if total is None else total + s * w_seg
    return total, parts


# ---------------------------------------------------------------- decoding
def decode_boxes(pred: DetPrediction, grid: GridSpec, threshold: float = 0.3,
                 max_boxes: int = 50) -> list[tuple[Box, float]]:
    """Local 3x3 maxima of the sigmoid heatmap above ``threshold``, as (box, score) pairs."""
    heat = 1.0 / (1.0 + np.exp(-pred.heatmap.data.astype(np.float64)))
    reg = pred.regression.data.astype(np.float64)
    C, X, Y = heat.shape
    padded = np.pad(heat, ((0, 0), (1, 1), (1, 1)), constant_values=-np.inf)
    windows = np.stack([padded[:, a:a + X, b:b + Y] for a in range(3) for b in range(3)])
    peaks = (heat >= windows.max(axis=0)) & (heat > threshold)
    c, i, j = np.nonzero(peaks)
    scores = heat[c, i, j]
    order = np.argsort(-scores, kind="stable")[:max_boxes]
    cx, cy = grid.cell_centers()
    out = []
    for k in order:
        ck, ik, jk = int(c[k]), int(i[k]), int(j[k])
        dx, dy, w, length, yaw = reg[:, ik, jk]
        center = (float(cx[ik, jk] + dx * grid.cell_size), float(cy[ik, jk] + dy * grid.cell_size))
        box = Box(center, (max(float(w), 1e-3), max(float(length), 1e-3)), float(yaw), ck)
        out.append((box, float(scores[k])))
    return out
