"""Corruption evaluation sweep over a frozen model."""
from __future__ import annotations

import re
from dataclasses import dataclass, replace

import numpy as np

from .corruptions import DEGREES, KINDS, SHORT_NAMES, CorruptionSpec, apply_corruption, make_mask_bank
from .data import SceneSet
from .heads import decode_boxes
from .metrics import MetricsReport, bev_ap_frames, retention
from .model import FusionModel
from .numerics import no_grad
from .world import seg_class_names

SUBSET_CODES = {"C": ("camera",), "L": ("lidar",), "C+L": ("camera", "lidar")}
FULL = ("camera", "lidar")


@dataclass(frozen=True)
class SuiteEntry:
    modalities: tuple[str, ...] = FULL
    corruption: CorruptionSpec | None = None

    def label(self) -> str:
        code = {v: k for k, v in SUBSET_CODES.items()}.get(tuple(self.modalities), "+".join(self.modalities))
        return code if self.corruption is None else f"{code}:{self.corruption.label()}"


def parse_entry(text: str, seed: int = 0) -> SuiteEntry:
    """``C``, ``L``, ``C+L``, optionally followed by ``:KIND`` or ``:KIND=DEGREE`` (e.g. ``C+L:LF=120``)."""
    m = re.fullmatch(r"\s*([CL+]+)\s*(?::\s*([A-Za-z]+)\s*(?:=\s*(\S+))?)?\s*", text)
    if not m or m.group(1) not in SUBSET_CODES:
        raise ValueError(f"cannot parse suite entry {text!r}")
    spec = None
    if m.group(2):
        spec = CorruptionSpec(m.group(2), m.group(3), seed)
    return SuiteEntry(SUBSET_CODES[m.group(1)], spec)


def degree_ladder(kind: str, seed: int = 0) -> list[SuiteEntry]:
    kind = SHORT_NAMES.get(kind, kind)
    return [SuiteEntry(FULL, CorruptionSpec(kind, d, seed)) for d in DEGREES[kind]]


def standard_suite(seed: int = 0) -> list[SuiteEntry]:
    """Every modality subset clean, then every corruption kind over its full ladder."""
    entries = [SuiteEntry(m) for m in SUBSET_CODES.values()]
    for kind in KINDS:
        entries += degree_ladder(kind, seed)
    return entries


def _frame_seed(spec_seed: int, k: int) -> int:
    return int(np.random.SeedSequence([spec_seed, k]).generate_state(1)[0])


@dataclass
class _Tally:
    inter: np.ndarray
    union: np.ndarray
    frames: list
    points: int = 0


def _run(model: FusionModel, entry: SuiteEntry, data: SceneSet, threshold: float) -> _Tally:
    n_cls = len(seg_class_names(model.cfg.object_classes))
    tally = _Tally(np.zeros(n_cls, dtype=np.int64), np.zeros(n_cls, dtype=np.int64), [])
    bank = None
    for k in range(len(data)):
        sample, gt = data[k]
        sample = replace(sample, modalities=tuple(entry.modalities))
        if entry.corruption is not None:
            if bank is None:
                _, _, H, W = sample.views.features.shape
                bank = make_mask_bank(H, W)
            spec = replace(entry.corruption, seed=_frame_seed(entry.corruption.seed, k))
            sample, _ = apply_corruption(sample, spec, bank)
        if "lidar" in sample.modalities:
            tally.points += len(sample.points)
        with no_grad():
            out = model(sample)
        pred = out.seg.masks(threshold)
        gtm = gt.seg_mask
        tally.inter += (pred & gtm).sum(axis=(1, 2))
        tally.union += (pred | gtm).sum(axis=(1, 2))
        tally.frames.append((decode_boxes(out.det, model.grid), gt.boxes))
    return tally


def _ious(t: _Tally) -> np.ndarray:
    return np.where(t.union == 0, 1.0, t.inter / np.maximum(t.union, 1))


def evaluate(model: FusionModel, suite: list[SuiteEntry], data: SceneSet, threshold: float = 0.5) -> list[MetricsReport]:
    """One report per suite entry; IoU is accumulated over the whole eval set.

    Retention is measured against the clean full-modality run on the same set.
    """
    for entry in suite:
        if not entry.modalities:
            raise ValueError("suite entry has no modality")
        if entry.corruption is not None and entry.corruption.kind in ("MissingCamera", "MissingLiDAR"):
            which = "camera" if entry.corruption.kind == "MissingCamera" else "lidar"
            if set(entry.modalities) <= {which}:
                raise ValueError(f"suite entry {entry.label()} would drop both modalities")
    names = list(seg_class_names(model.cfg.object_classes))
    ref = _ious(_run(model, SuiteEntry(FULL), data, threshold))
    ref_miou = float(ref.mean())
    reports = []
    for entry in suite:
        t = _run(model, entry, data, threshold)
        ious = _ious(t)
        miou = float(ious.mean())
        reports.append(MetricsReport(
            class_names=names,
            class_iou=[float(v) for v in ious],
            miou=miou,
            ap=bev_ap_frames(t.frames),
            modalities=list(entry.modalities),
            corruption=None if entry.corruption is None else entry.corruption.to_dict(),
            retention=retention(ref_miou, miou) if ref_miou > 0 else None,
            extra={"label": entry.label(), "reference_miou": ref_miou, "n_scenes": len(data),
                   "lidar_points": t.points},
        ))
    return reports
