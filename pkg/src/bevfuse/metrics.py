"""Evaluation metrics: per-class IoU, BEV average precision and retention."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .world import Box


def iou_per_class(pred: np.ndarray, gt: np.ndarray) -> np.ndarray:
    """IoU over all but the leading class axis; a class empty in both counts as 1."""
    pred = np.asarray(pred, dtype=bool)
    gt = np.asarray(gt, dtype=bool)
    if pred.shape != gt.shape:
        raise ValueError(f"mask shapes differ: {pred.shape} vs {gt.shape}")
    axes = tuple(range(1, pred.ndim))
    inter = (pred & gt).sum(axis=axes)
    union = (pred | gt).sum(axis=axes)
    return np.where(union == 0, 1.0, inter / np.maximum(union, 1))


def miou(pred: np.ndarray, gt: np.ndarray) -> tuple[np.ndarray, float]:
    ious = iou_per_class(pred, gt)
    return ious, float(ious.mean())


def box_aabb(box: Box) -> np.ndarray:
    """(xmin, ymin, xmax, ymax) of the rotated footprint."""
    c = box.corners()
    return np.concatenate([c.min(axis=0), c.max(axis=0)])


def aabb_iou(a: np.ndarray, b: np.ndarray) -> float:
    w = min(a[2], b[2]) - max(a[0], b[0])
    h = min(a[3], b[3]) - max(a[1], b[1])
    if w <= 0 or h <= 0:
        return 0.0
    inter = w * h
    union = (a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter
    return float(inter / union)


def bev_ap(preds: list[tuple[Box, float]], gts: list[Box], iou_thresh: float = 0.5) -> float:
    """11-point interpolated AP with greedy, class-aware matching in descending score order.

    With no ground truth the result is 1.0 when there are no predictions and
    0.0 otherwise.
    """
    return bev_ap_frames([(preds, gts)], iou_thresh)


def _match_frame(preds, gts, iou_thresh):
    """Greedy matching inside one frame; returns (score, is_tp) per prediction."""
    order = sorted(range(len(preds)), key=lambda k: -preds[k][1])
    gt_boxes = [box_aabb(g) for g in gts]
    taken = np.zeros(len(gts), dtype=bool)
    out = []
    for k in order:
        box, score = preds[k]
        a = box_aabb(box)
        best, best_iou = -1, iou_thresh
        for g, gbox in enumerate(gt_boxes):
            if taken[g] or gts[g].class_id != box.class_id:
                continue
            iou = aabb_iou(a, gbox)
            if iou >= best_iou:
                best, best_iou = g, iou
        if best >= 0:
            taken[best] = True
        out.append((score, best >= 0))
    return out


def bev_ap_frames(frames: list[tuple[list[tuple[Box, float]], list[Box]]], iou_thresh: float = 0.5) -> float:
    """AP pooled over frames: match within each frame, then rank all predictions by score."""
    n_gt = sum(len(g) for _, g in frames)
    n_pred = sum(len(p) for p, _ in frames)
    if n_gt == 0:
        return 1.0 if n_pred == 0 else 0.0
    if n_pred == 0:
        return 0.0
    hits = [h for preds, gts in frames for h in _match_frame(preds, gts, iou_thresh)]
    hits.sort(key=lambda h: -h[0])
    tp = np.array([h[1] for h in hits], dtype=np.float64)
    ctp = np.cumsum(tp)
    recall = ctp / n_gt
    precision = ctp / np.arange(1, len(tp) + 1)
    ap = 0.0
    for r in np.linspace(0.0, 1.0, 11):
        hit = precision[recall >= r - 1e-12]
        ap += hit.max() if hit.size else 0.0
    return float(ap / 11.0)


def retention(full_miou: float, corrupted_miou: float) -> float:
    """Robustness ratio: corrupted metric over clean metric."""
    if full_miou == 0:
        raise ValueError("retention undefined for a zero clean metric")
    if full_miou < 0 or corrupted_miou < 0:
        raise ValueError("metrics must be nonnegative")
    return corrupted_miou / full_miou


@dataclass
class MetricsReport:
    class_names: list[str]
    class_iou: list[float]
    miou: float
    ap: float
    modalities: list[str]
    corruption: dict | None = None
    retention: float | None = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        for v in [*self.class_iou, self.miou, self.ap]:
            if not 0.0 <= v <= 1.0 or math.isnan(v):
                raise ValueError(f"metric {v} outside [0, 1]")
        if self.retention is not None and self.retention < 0:
            raise ValueError("retention must be nonnegative")

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsReport":
        return cls(**d)
