"""Seeded sensor-failure simulator applied to raw point clouds and camera views."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .world import Box, MultiViewSet, PointCloud, Sample, points_in_box

LIDAR_KINDS = ("LimitedField", "MissingObjects", "BeamReduction")
CAMERA_KINDS = ("ViewDrop", "ViewNoise", "ObstacleOcclusion")
ABSENCE_KINDS = ("MissingCamera", "MissingLiDAR")
KINDS = LIDAR_KINDS + CAMERA_KINDS + ABSENCE_KINDS

SHORT_NAMES = {
    "LF": "LimitedField",
    "MO": "MissingObjects",
    "BR": "BeamReduction",
    "VD": "ViewDrop",
    "VN": "ViewNoise",
    "OO": "ObstacleOcclusion",
    "MC": "MissingCamera",
    "ML": "MissingLiDAR",
}

DEGREES = {
    "LimitedField": (360, 240, 180, 120),
    "MissingObjects": (0.0, 0.1, 0.3, 0.5, 0.7, 1.0),
    "BeamReduction": (32, 16, 8, 4, 1),
    "ViewDrop": (0, 1, 2, 3, 4, 5, 6),
    "ViewNoise": (0, 1, 2, 3, 4, 5, 6),
    "ObstacleOcclusion": ("clean", "occluded"),
    "MissingCamera": (None,),
    "MissingLiDAR": (None,),
}

IDENTITY_DEGREE = {
    "LimitedField": 360,
    "MissingObjects": 0.0,
    "BeamReduction": 32,
    "ViewDrop": 0,
    "ViewNoise": 0,
    "ObstacleOcclusion": "clean",
}

OCCLUSION_ALPHA = 0.8
OCCLUDER_VALUE = 0.5
FULL_BEAMS = 32


@dataclass(frozen=True)
class CorruptionSpec:
    kind: str
    degree: object = None
    seed: int = 0

    def __post_init__(self):
        kind = SHORT_NAMES.get(self.kind, self.kind)
        object.__setattr__(self, "kind", kind)
        if kind not in KINDS:
            raise ValueError(f"unknown corruption kind {self.kind!r}")
        degree = _coerce_degree(kind, self.degree)
        if degree not in DEGREES[kind]:
            raise ValueError(f"{kind} degree {self.degree!r} not in {DEGREES[kind]}")
        object.__setattr__(self, "degree", degree)

    @property
    def is_identity(self) -> bool:
        return IDENTITY_DEGREE.get(self.kind, object()) == self.degree

    def to_dict(self) -> dict:
        return {"kind": self.kind, "degree": self.degree, "seed": self.seed}

    def label(self) -> str:
        return self.kind if self.degree is None else f"{self.kind}:{self.degree}"


def _coerce_degree(kind: str, degree):
    if kind in ABSENCE_KINDS:
        return None
    if kind == "ObstacleOcclusion":
        return str(degree)
    if kind == "MissingObjects":
        return float(degree)
    if isinstance(degree, str):
        degree = float(degree)
    if float(degree) != int(float(degree)):
        raise ValueError(f"{kind} needs an integer degree, got {degree!r}")
    return int(degree)


# ------------------------------------------------------------------ LiDAR
def limited_field(pc: PointCloud, fov_deg: float) -> PointCloud:
    """Keep points with azimuth in [-fov/2, +fov/2)."""
    if fov_deg not in DEGREES["LimitedField"]:
        raise ValueError(f"field of view {fov_deg} not in {DEGREES['LimitedField']}")
    half = fov_deg / 2.0
    return pc.select((pc.azimuth >= -half) & (pc.azimuth < half))


def object_membership(pc: PointCloud, boxes: list[Box], margin: float = 0.05) -> np.ndarray:
    """Index of the first box containing each point, -1 for background."""
    owner = np.full(len(pc), -1, dtype=np.int64)
    for k, box in enumerate(boxes):
        inside = points_in_box(pc.xyz, box, margin) & (owner < 0)
        owner[inside] = k
    return owner


def missing_objects(pc: PointCloud, boxes: list[Box], rate: float, seed: int) -> PointCloud:
    """Drop every point of each box whose seeded coin (one per box) lands below ``rate``."""
    rate = float(rate)
    if rate not in DEGREES["MissingObjects"]:
        raise ValueError(f"missing-object rate {rate} not in {DEGREES['MissingObjects']}")
    coins = np.random.default_rng(seed).uniform(size=len(boxes))
    removed = np.nonzero(coins < rate)[0]
    owner = object_membership(pc, boxes)
    return pc.select(~np.isin(owner, removed))


def beam_reduction(pc: PointCloud, target_beams: int, total_beams: int = FULL_BEAMS) -> PointCloud:
    """Keep beams 0, s, 2s, ... with stride s = total / target."""
    if target_beams not in DEGREES["BeamReduction"] or total_beams % target_beams:
        raise ValueError(f"beam count {target_beams} must be one of {DEGREES['BeamReduction']}")
    stride = total_beams // target_beams
    return pc.select(pc.beam_id % stride == 0)


# ----------------------------------------------------------------- cameras
def _pick_views(n_views: int, n: int, seed: int) -> np.ndarray:
    if not 0 <= n <= n_views:
        raise ValueError(f"cannot pick {n} of {n_views} views")
    return np.sort(np.random.default_rng(seed).choice(n_views, size=n, replace=False))


def view_drop(views: MultiViewSet, n: int, seed: int) -> tuple[MultiViewSet, np.ndarray]:
    """Zero ``n`` seeded views; returns the new set and the dropped indices."""
    picked = _pick_views(views.n_views, n, seed)
    if n == 0:
        return views, picked
    feats = views.features.copy()
    feats[picked] = 0.0
    return views.with_features(feats), picked


def view_noise(views: MultiViewSet, n: int, seed: int, value_range=(0.0, 1.0)) -> tuple[MultiViewSet, np.ndarray]:
    """Replace ``n`` seeded views with seeded uniform noise over ``value_range``."""
    picked = _pick_views(views.n_views, n, seed)
    if n == 0:
        return views, picked
    rng = np.random.default_rng([seed, 1])
    feats = views.features.copy()
    lo, hi = value_range
    feats[picked] = rng.uniform(lo, hi, size=(len(picked),) + feats.shape[1:])
    return views.with_features(feats), picked


def make_mask_bank(height: int, width: int, n_masks: int = 4) -> np.ndarray:
    """Procedural soft blobs in [0, 1], shape (n_masks, H, W)."""
    v, u = np.meshgrid((np.arange(height) + 0.5) / height, (np.arange(width) + 0.5) / width, indexing="ij")
    specs = [(0.3, 0.6, 0.25, 0.35), (0.7, 0.5, 0.3, 0.25), (0.5, 0.75, 0.45, 0.2), (0.2, 0.3, 0.2, 0.3)]
    masks = []
    for k in range(n_masks):
        cu, cv, ru, rv = specs[k % len(specs)]
        d = ((u - cu) / ru) ** 2 + ((v - cv) / rv) ** 2
        masks.append(np.clip(1.5 - d, 0.0, 1.0))
    return np.stack(masks)


def obstacle_occlusion(views: MultiViewSet, mask_bank: np.ndarray, alpha: float, seed: int,
                       occluder_value: float = OCCLUDER_VALUE) -> tuple[MultiViewSet, np.ndarray]:
    """Alpha-blend a seeded mask per view: (1 - alpha*m) * view + alpha*m * occluder."""
    mask_bank = np.asarray(mask_bank, dtype=np.float64)
    if mask_bank.ndim != 3 or len(mask_bank) == 0:
        raise ValueError("mask bank must be a non-empty (n, H, W) stack")
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    picked = np.random.default_rng(seed).integers(len(mask_bank), size=views.n_views)
    if alpha == 0.0:
        return views, picked
    m = alpha * mask_bank[picked][:, None, :, :]
    feats = (1.0 - m) * views.features + m * occluder_value
    return views.with_features(feats), picked


# ------------------------------------------------------------------ absence
def drop_modality(sample: Sample, which: str) -> Sample:
    """Remove ``which`` from the available modalities; raw data is left untouched."""
    if which not in ("camera", "lidar"):
        raise ValueError(f"unknown modality {which!r}")
    if which not in sample.modalities:
        raise ValueError(f"{which} already absent")
    remaining = tuple(m for m in sample.modalities if m != which)
    if not remaining:
        raise ValueError("cannot drop the last remaining modality")
    return replace(sample, modalities=remaining)


def apply_corruption(sample: Sample, spec: CorruptionSpec, mask_bank: np.ndarray | None = None) -> tuple[Sample, dict]:
    """Apply one corruption; returns the corrupted sample and a manifest record."""
    record = spec.to_dict()
    kind, deg = spec.kind, spec.degree
    out = sample
    if kind == "LimitedField":
        out = replace(sample, points=limited_field(sample.points, deg))
    elif kind == "MissingObjects":
        out = replace(sample, points=missing_objects(sample.points, sample.scene.boxes, deg, spec.seed))
    elif kind == "BeamReduction":
        out = replace(sample, points=beam_reduction(sample.points, deg))
    elif kind in ("ViewDrop", "ViewNoise"):
        fn = view_drop if kind == "ViewDrop" else view_noise
        views, picked = fn(sample.views, deg, spec.seed)
        out = replace(sample, views=views)
        record["views"] = picked.tolist()
    elif kind == "ObstacleOcclusion":
        if mask_bank is None:
            _, _, H, W = sample.views.features.shape
            mask_bank = make_mask_bank(H, W)
        alpha = 0.0 if deg == "clean" else OCCLUSION_ALPHA
        views, picked = obstacle_occlusion(sample.views, mask_bank, alpha, spec.seed)
        out = replace(sample, views=views)
        record["masks"] = picked.tolist()
    elif kind == "MissingCamera":
        out = drop_modality(sample, "camera")
    elif kind == "MissingLiDAR":
        out = drop_modality(sample, "lidar")
    record["retained_points"] = len(out.points) if "lidar" in out.modalities else 0
    record["modalities"] = list(out.modalities)
    return out, record


def random_corruption(rng: np.random.Generator, n_views: int = 6) -> CorruptionSpec:
    """Draw a sensor corruption and degree uniformly, for in-domain training."""
    kind = LIDAR_KINDS + CAMERA_KINDS
    k = kind[int(rng.integers(len(kind)))]
    degrees = DEGREES[k]
    if k in ("ViewDrop", "ViewNoise"):
        degrees = tuple(d for d in degrees if d <= n_views)
    return CorruptionSpec(k, degrees[int(rng.integers(len(degrees)))], int(rng.integers(2**31)))
