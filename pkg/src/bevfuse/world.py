"""Seeded toy driving scenes with paired LiDAR sweeps, camera feature maps and BEV labels.

Frames: ego x forward, y left, z up, ground plane at z=0. Camera frames are
x right, y down, z forward (optical axis).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .grid import GridSpec

MAP_CLASSES = ("drivable", "walkway", "divider")
OBJECT_CLASSES = ("car", "truck")

# (length range, width range, height) in meters
OBJECT_DIMS = {
    "car": ((4.0, 5.0), (1.8, 2.1), 1.6),
    "truck": ((7.0, 9.0), (2.4, 2.8), 3.2),
    "pedestrian": ((0.6, 0.9), (0.6, 0.9), 1.8),
}

MATERIAL_INTENSITY = {"ground": 0.05, "drivable": 0.25, "walkway": 0.5, "divider": 0.9}
OBJECT_INTENSITY = {"car": 0.7, "truck": 0.6, "pedestrian": 0.4}

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class Box:
    center: tuple[float, float]
    size: tuple[float, float]  # (width, length) in meters
    yaw: float
    class_id: int
    height: float = 1.6

    @property
    def width(self) -> float:
        return self.size[0]

    @property
    def length(self) -> float:
        return self.size[1]

    def corners(self) -> np.ndarray:
        """Footprint corners (4, 2), counter-clockwise."""
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        hl, hw = self.length / 2, self.width / 2
        local = np.array([[hl, hw], [-hl, hw], [-hl, -hw], [hl, -hw]])
        rot = np.array([[c, -s], [s, c]])
        return local @ rot.T + np.asarray(self.center)


@dataclass
class Scene:
    boxes: list[Box]
    map_layers: dict[str, list[np.ndarray]]
    bounds: float
    class_names: tuple[str, ...] = OBJECT_CLASSES

    def __post_init__(self):
        for b in self.boxes:
            if not (0 <= b.class_id < len(self.class_names)):
                raise ValueError(f"class_id {b.class_id} outside class set {self.class_names}")

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA_VERSION,
            "bounds": self.bounds,
            "class_names": list(self.class_names),
            "boxes": [
                {
                    "center": list(b.center),
                    "size_wl": list(b.size),
                    "yaw": b.yaw,
                    "class_id": b.class_id,
                    "height": b.height,
                }
                for b in self.boxes
            ],
            "map_layers": {k: [p.tolist() for p in v] for k, v in self.map_layers.items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Scene":
        if d.get("schema") != SCHEMA_VERSION:
            raise ValueError(f"unsupported scene schema {d.get('schema')}")
        boxes = [
            Box(tuple(b["center"]), tuple(b["size_wl"]), b["yaw"], b["class_id"], b["height"]) for b in d["boxes"]
        ]
        layers = {k: [np.asarray(p, dtype=np.float64) for p in v] for k, v in d["map_layers"].items()}
        return cls(boxes, layers, d["bounds"], tuple(d["class_names"]))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "Scene":
        return cls.from_dict(json.loads(text))

    def transformed(self, yaw: float = 0.0, shift: tuple[float, float] = (0.0, 0.0)) -> "Scene":
        """Rotate about the ego origin by ``yaw`` then translate by ``shift``."""
        c, s = math.cos(yaw), math.sin(yaw)
        rot = np.array([[c, -s], [s, c]])
        t = np.asarray(shift, dtype=np.float64)

        def move(p):
            return np.asarray(p) @ rot.T + t

        boxes = [replace(b, center=tuple(move(b.center)), yaw=b.yaw + yaw) for b in self.boxes]
        layers = {k: [move(p) for p in v] for k, v in self.map_layers.items()}
        return Scene(boxes, layers, self.bounds, self.class_names)


@dataclass(frozen=True)
class SceneSpec:
    bounds: float = 20.0
    box_count: tuple[int, int] = (2, 6)
    classes: tuple[str, ...] = OBJECT_CLASSES
    road_half_width: float = 4.0
    walkway_width: float = 2.5
    divider_width: float = 1.0
    cross_road_prob: float = 0.5
    keep_clear: float = 3.0


def _rect(center, direction, half_len, half_wid) -> np.ndarray:
    d = np.asarray(direction) / np.linalg.norm(direction)
    n = np.array([-d[1], d[0]])
    c = np.asarray(center, dtype=np.float64)
    return np.array(
        [
            c + d * half_len + n * half_wid,
            c - d * half_len + n * half_wid,
            c - d * half_len - n * half_wid,
            c + d * half_len - n * half_wid,
        ]
    )


def generate_scene(seed: int, spec: SceneSpec = SceneSpec()) -> Scene:
    """Draw roads, walkways, dividers and non-overlapping boxes from ``seed``."""
    if not spec.bounds > 0:
        raise ValueError("scene bounds must be positive")
    lo, hi = spec.box_count
    if lo < 0 or hi < lo:
        raise ValueError(f"bad box_count range {spec.box_count}")
    for name in spec.classes:
        if name not in OBJECT_DIMS:
            raise ValueError(f"unknown object class {name!r}")
    rng = np.random.default_rng(seed)
    b = spec.bounds
    span = 4 * b

    layers: dict[str, list[np.ndarray]] = {k: [] for k in MAP_CLASSES}
    roads = []
    theta = rng.uniform(0, math.pi)
    n_roads = 2 if rng.uniform() < spec.cross_road_prob else 1
    for r in range(n_roads):
        ang = theta if r == 0 else theta + math.pi / 2 + rng.uniform(-0.35, 0.35)
        d = np.array([math.cos(ang), math.sin(ang)])
        n = np.array([-d[1], d[0]])
        offset = rng.uniform(-0.4, 0.4) * b
        center = n * offset
        hw = spec.road_half_width
        layers["drivable"].append(_rect(center, d, span, hw))
        layers["divider"].append(_rect(center, d, span, spec.divider_width / 2))
        for side in (-1, 1):
            wc = center + side * n * (hw + spec.walkway_width / 2)
            layers["walkway"].append(_rect(wc, d, span, spec.walkway_width / 2))
        roads.append((center, d, n))

    boxes: list[Box] = []
    n_boxes = int(rng.integers(lo, hi + 1))
    attempts = 0
    while len(boxes) < n_boxes and attempts < 200 * max(n_boxes, 1):
        attempts += 1
        cls_id = int(rng.integers(len(spec.classes)))
        (l_lo, l_hi), (w_lo, w_hi), h = OBJECT_DIMS[spec.classes[cls_id]]
        length = rng.uniform(l_lo, l_hi)
        width = rng.uniform(w_lo, w_hi)
        center, d, n = roads[int(rng.integers(len(roads)))]
        along = rng.uniform(-1.2, 1.2) * b
        lane = rng.choice([-1.0, 1.0]) * rng.uniform(0.5, spec.road_half_width - width / 2 - 0.2)
        pos = center + d * along + n * lane
        reach = math.hypot(length, width) / 2
        if np.any(np.abs(pos) > b - reach):
            continue
        if abs(pos[0]) < spec.keep_clear + reach and abs(pos[1]) < spec.keep_clear + reach:
            continue
        if any(math.dist(pos, o.center) < reach + math.hypot(o.length, o.width) / 2 + 0.5 for o in boxes):
            continue
        yaw = math.atan2(d[1], d[0]) + (math.pi if rng.uniform() < 0.5 else 0.0) + rng.uniform(-0.1, 0.1)
        yaw = math.atan2(math.sin(yaw), math.cos(yaw))
        boxes.append(Box((float(pos[0]), float(pos[1])), (float(width), float(length)), float(yaw), cls_id, h))
    return Scene(boxes, layers, b, tuple(spec.classes))


# ---------------------------------------------------------------- geometry
def points_in_polygon(xy: np.ndarray, poly: np.ndarray) -> np.ndarray:
    """Even-odd rule, vectorized over points."""
    xy = np.asarray(xy, dtype=np.float64)
    x, y = xy[..., 0], xy[..., 1]
    inside = np.zeros(x.shape, dtype=bool)
    n = len(poly)
    for k in range(n):
        x1, y1 = poly[k]
        x2, y2 = poly[(k + 1) % n]
        crosses = (y1 > y) != (y2 > y)
        with np.errstate(divide="ignore", invalid="ignore"):
            xint = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
        inside ^= crosses & (x < xint)
    return inside


def points_in_box(xyz: np.ndarray, box: Box, margin: float = 0.0) -> np.ndarray:
    """True for points within the box footprint (+margin) and height range (+margin)."""
    xyz = np.asarray(xyz, dtype=np.float64).reshape(-1, 3)
    c, s = math.cos(box.yaw), math.sin(box.yaw)
    dx = xyz[:, 0] - box.center[0]
    dy = xyz[:, 1] - box.center[1]
    lx = c * dx + s * dy
    ly = -s * dx + c * dy
    return (
        (np.abs(lx) <= box.length / 2 + margin)
        & (np.abs(ly) <= box.width / 2 + margin)
        & (xyz[:, 2] >= -margin)
        & (xyz[:, 2] <= box.height + margin)
    )


def ray_box_distance(origin: np.ndarray, dirs: np.ndarray, box: Box) -> np.ndarray:
    """Ray parameter of the first entry into ``box`` per ray; inf on a miss.

    ``dirs`` need not be unit length; the result is in units of ``dirs``.
    Rays starting inside the box report inf.
    """
    c, s = math.cos(box.yaw), math.sin(box.yaw)
    o = np.asarray(origin, dtype=np.float64)
    ox = c * (o[0] - box.center[0]) + s * (o[1] - box.center[1])
    oy = -s * (o[0] - box.center[0]) + c * (o[1] - box.center[1])
    oz = o[2]
    dx = c * dirs[:, 0] + s * dirs[:, 1]
    dy = -s * dirs[:, 0] + c * dirs[:, 1]
    dz = dirs[:, 2]
    t_near = np.full(len(dirs), -np.inf)
    t_far = np.full(len(dirs), np.inf)
    for o_k, d_k, lo, hi in (
        (ox, dx, -box.length / 2, box.length / 2),
        (oy, dy, -box.width / 2, box.width / 2),
        (oz, dz, 0.0, box.height),
    ):
        parallel = d_k == 0
        safe = np.where(parallel, 1.0, d_k)
        t1 = (lo - o_k) / safe
        t2 = (hi - o_k) / safe
        tmin = np.minimum(t1, t2)
        tmax = np.maximum(t1, t2)
        outside = parallel & ((o_k < lo) | (o_k > hi))
        tmin = np.where(parallel, np.where(outside, np.inf, -np.inf), tmin)
        tmax = np.where(parallel, np.where(outside, -np.inf, np.inf), tmax)
        t_near = np.maximum(t_near, tmin)
        t_far = np.minimum(t_far, tmax)
    hit = (t_near <= t_far) & (t_near > 1e-9)
    return np.where(hit, t_near, np.inf)


def ground_distance(origin: np.ndarray, dirs: np.ndarray) -> np.ndarray:
    """Ray parameter where each ray meets z=0; inf for rays not heading down."""
    oz = float(origin[2])
    dz = dirs[:, 2]
    with np.errstate(divide="ignore"):
        t = np.where(dz < 0, -oz / np.where(dz < 0, dz, -1.0), np.inf)
    return np.where(t > 0, t, np.inf)


def map_labels(scene: Scene, xy: np.ndarray) -> np.ndarray:
    """Boolean (len(MAP_CLASSES), ...) membership of ground points in each map layer."""
    xy = np.asarray(xy, dtype=np.float64)
    out = np.zeros((len(MAP_CLASSES),) + xy.shape[:-1], dtype=bool)
    for k, name in enumerate(MAP_CLASSES):
        for poly in scene.map_layers.get(name, []):
            out[k] |= points_in_polygon(xy, poly)
    return out


# ---------------------------------------------------------------- sensors
@dataclass(frozen=True)
class Camera:
    intrinsics: np.ndarray  # 3x3
    rotation: np.ndarray  # camera-to-ego 3x3
    translation: np.ndarray  # camera origin in ego frame
    resolution: tuple[int, int]  # (H, W)

    def __post_init__(self):
        if abs(np.linalg.det(self.intrinsics)) < 1e-12:
            raise ValueError("camera intrinsics must be invertible")

    def pixel_rays(self) -> np.ndarray:
        """Ego-frame ray directions (H*W, 3) through pixel centers, scaled so t equals depth."""
        H, W = self.resolution
        v, u = np.meshgrid(np.arange(H) + 0.5, np.arange(W) + 0.5, indexing="ij")
        pix = np.stack([u.ravel(), v.ravel(), np.ones(H * W)], axis=0)
        cam = np.linalg.inv(self.intrinsics) @ pix
        return (self.rotation @ cam).T

    def to_dict(self) -> dict:
        return {
            "intrinsics": self.intrinsics.tolist(),
            "rotation": self.rotation.tolist(),
            "translation": self.translation.tolist(),
            "resolution": list(self.resolution),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Camera":
        return cls(
            np.asarray(d["intrinsics"]),
            np.asarray(d["rotation"]),
            np.asarray(d["translation"]),
            tuple(d["resolution"]),
        )


def make_camera(yaw_deg: float, resolution=(32, 88), hfov_deg: float = 70.0, pitch_deg: float = -10.0,
                height: float = 1.6, position=(0.0, 0.0)) -> Camera:
    H, W = resolution
    f = (W / 2) / math.tan(math.radians(hfov_deg) / 2)
    K = np.array([[f, 0.0, W / 2], [0.0, f, H / 2], [0.0, 0.0, 1.0]])
    yaw, pitch = math.radians(yaw_deg), math.radians(pitch_deg)
    fwd = np.array([math.cos(pitch) * math.cos(yaw), math.cos(pitch) * math.sin(yaw), math.sin(pitch)])
    right = np.array([math.sin(yaw), -math.cos(yaw), 0.0])
    down = np.cross(fwd, right)
    R = np.stack([right, down, fwd], axis=1)
    return Camera(K, R, np.array([position[0], position[1], height]), (H, W))


@dataclass(frozen=True)
class LidarSpec:
    n_beams: int = 32
    azimuth_steps: int = 360
    max_range: float = 60.0
    elevations_deg: tuple[float, ...] | None = None
    height: float = 1.8
    yaw_deg: float = 0.0
    range_noise: float = 0.02
    intensity_noise: float = 0.02

    def elevations(self) -> np.ndarray:
        if self.elevations_deg is not None:
            if len(self.elevations_deg) != self.n_beams:
                raise ValueError("need one elevation per beam")
            return np.radians(np.asarray(self.elevations_deg, dtype=np.float64))
        return np.radians(np.linspace(-25.0, 5.0, self.n_beams))

    def azimuths_deg(self) -> np.ndarray:
        return -180.0 + np.arange(self.azimuth_steps) * (360.0 / self.azimuth_steps)


@dataclass(frozen=True)
class SensorRig:
    cameras: tuple[Camera, ...]
    lidar: LidarSpec = LidarSpec()

    @property
    def n_views(self) -> int:
        return len(self.cameras)

    def to_dict(self) -> dict:
        lid = self.lidar
        return {
            "cameras": [c.to_dict() for c in self.cameras],
            "lidar": {
                "n_beams": lid.n_beams,
                "azimuth_steps": lid.azimuth_steps,
                "max_range": lid.max_range,
                "elevations_deg": None if lid.elevations_deg is None else list(lid.elevations_deg),
                "height": lid.height,
                "yaw_deg": lid.yaw_deg,
                "range_noise": lid.range_noise,
                "intensity_noise": lid.intensity_noise,
            },
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SensorRig":
        lid = dict(d["lidar"])
        if lid.get("elevations_deg") is not None:
            lid["elevations_deg"] = tuple(lid["elevations_deg"])
        return cls(tuple(Camera.from_dict(c) for c in d["cameras"]), LidarSpec(**lid))


def default_rig(n_views: int = 6, resolution=(32, 88), lidar: LidarSpec | None = None, **camera_kw) -> SensorRig:
    cams = tuple(make_camera(360.0 * k / n_views, resolution, **camera_kw) for k in range(n_views))
    return SensorRig(cams, lidar or LidarSpec())


@dataclass
class PointCloud:
    xyz: np.ndarray  # (N, 3) ego frame
    intensity: np.ndarray  # (N,)
    beam_id: np.ndarray  # (N,) int
    azimuth: np.ndarray  # (N,) degrees in [-180, 180), sensor frame

    def __len__(self) -> int:
        return len(self.xyz)

    def select(self, mask: np.ndarray) -> "PointCloud":
        return PointCloud(self.xyz[mask], self.intensity[mask], self.beam_id[mask], self.azimuth[mask])

    def equals(self, other: "PointCloud") -> bool:
        return all(
            a.dtype == b.dtype and a.shape == b.shape and a.tobytes() == b.tobytes()
            for a, b in (
                (self.xyz, other.xyz),
                (self.intensity, other.intensity),
                (self.beam_id, other.beam_id),
                (self.azimuth, other.azimuth),
            )
        )

    @classmethod
    def empty(cls) -> "PointCloud":
        return cls(np.zeros((0, 3)), np.zeros(0), np.zeros(0, dtype=np.int64), np.zeros(0))


@dataclass
class MultiViewSet:
    features: np.ndarray  # (n_views, C, H, W)
    cameras: tuple[Camera, ...] = field(default_factory=tuple)

    @property
    def n_views(self) -> int:
        return self.features.shape[0]

    def with_features(self, features: np.ndarray) -> "MultiViewSet":
        return MultiViewSet(features, self.cameras)


def view_channels(class_names=OBJECT_CLASSES) -> int:
    """Map layers + object classes + (inverse depth, hit height, coverage flag)."""
    return len(MAP_CLASSES) + len(class_names) + 3


def _nearest_box(scene: Scene, origin: np.ndarray, dirs: np.ndarray):
    t_box = np.full(len(dirs), np.inf)
    which = np.full(len(dirs), -1, dtype=np.int64)
    for k, box in enumerate(scene.boxes):
        t = ray_box_distance(origin, dirs, box)
        closer = t < t_box
        t_box = np.where(closer, t, t_box)
        which = np.where(closer, k, which)
    return t_box, which


def raycast_lidar(scene: Scene, rig: SensorRig, seed: int = 0) -> PointCloud:
    """One candidate return per (beam, azimuth step): nearest box or ground hit within range."""
    lid = rig.lidar
    elev = lid.elevations()
    az = lid.azimuths_deg()
    world_az = np.radians(az + lid.yaw_deg)
    E, A = np.meshgrid(elev, world_az, indexing="ij")
    dirs = np.stack([np.cos(E) * np.cos(A), np.cos(E) * np.sin(A), np.sin(E)], axis=-1).reshape(-1, 3)
    beam = np.repeat(np.arange(lid.n_beams), len(az))
    azim = np.tile(az, lid.n_beams)
    origin = np.array([0.0, 0.0, lid.height])

    t_ground = ground_distance(origin, dirs)
    t_box, which = _nearest_box(scene, origin, dirs)
    t = np.minimum(t_ground, t_box)
    keep = t <= lid.max_range

    rng = np.random.default_rng(seed)
    noise_r = rng.normal(0.0, 1.0, size=len(dirs)) * lid.range_noise
    noise_i = rng.normal(0.0, 1.0, size=len(dirs)) * lid.intensity_noise

    t, dirs, which, box_hit = t[keep], dirs[keep], which[keep], (t_box <= t_ground)[keep]
    xyz = origin + dirs * (t + noise_r[keep])[:, None]

    intensity = np.full(len(t), MATERIAL_INTENSITY["ground"])
    ground_pts = origin + dirs * t[:, None]
    labels = map_labels(scene, ground_pts[:, :2])
    for k, name in enumerate(MAP_CLASSES):
        intensity = np.where(labels[k], MATERIAL_INTENSITY[name], intensity)
    for k, box in enumerate(scene.boxes):
        name = scene.class_names[box.class_id]
        intensity = np.where(box_hit & (which == k), OBJECT_INTENSITY.get(name, 0.5), intensity)
    intensity = np.clip(intensity + noise_i[keep], 0.0, 1.0)
    return PointCloud(xyz, intensity, beam[keep].astype(np.int64), azim[keep])


def render_views(scene: Scene, rig: SensorRig) -> MultiViewSet:
    """Per-view feature maps: class channels of whatever each pixel ray hits first.

    Channels: map layers, object classes, inverse depth, hit height,
    coverage flag. Rays that hit nothing labeled stay zero.
    """
    n_map, n_obj = len(MAP_CLASSES), len(scene.class_names)
    C = view_channels(scene.class_names)
    views = []
    for cam in rig.cameras:
        H, W = cam.resolution
        dirs = cam.pixel_rays()
        origin = cam.translation
        t_ground = ground_distance(origin, dirs)
        t_box, which = _nearest_box(scene, origin, dirs)
        feat = np.zeros((C, H * W))

        box_first = np.isfinite(t_box) & (t_box <= t_ground)
        ground_first = np.isfinite(t_ground) & ~box_first
        if ground_first.any():
            gp = origin + dirs[ground_first] * t_ground[ground_first][:, None]
            labels = map_labels(scene, gp[:, :2])
            feat[:n_map, ground_first] = labels
        for k, box in enumerate(scene.boxes):
            sel = box_first & (which == k)
            feat[n_map + box.class_id, sel] = 1.0
        hit_z = origin[2] + dirs[:, 2] * np.where(box_first, t_box, t_ground)
        covered = feat[: n_map + n_obj].any(axis=0)
        depth = np.where(box_first, t_box, t_ground)
        feat[n_map + n_obj, covered] = np.minimum(1.0, 2.0 / depth[covered])
        feat[n_map + n_obj + 1, covered] = np.clip(hit_z[covered] / 4.0, 0.0, 1.0)
        feat[n_map + n_obj + 2, covered] = 1.0
        views.append(feat.reshape(C, H, W))
    return MultiViewSet(np.stack(views) if views else np.zeros((0, C, 0, 0)), tuple(rig.cameras))


# ------------------------------------------------------------ ground truth
@dataclass
class GroundTruth:
    seg_mask: np.ndarray  # (n_seg, X, Y) bool: map layers then object classes
    heatmap: np.ndarray  # (n_obj, X, Y) float
    regression: np.ndarray  # (5, X, Y): dx, dy (cells), width, length, yaw folded to [-pi/2, pi/2)
    reg_mask: np.ndarray  # (X, Y) bool, box-center cells
    boxes: list[Box]


def fold_yaw(yaw: float) -> float:
    """Yaw modulo pi in [-pi/2, pi/2): a footprint looks the same after a half turn."""
    return (yaw + math.pi / 2) % math.pi - math.pi / 2


def seg_class_names(class_names=OBJECT_CLASSES) -> tuple[str, ...]:
    return MAP_CLASSES + tuple(class_names)


def rasterize_ground_truth(scene: Scene, grid: GridSpec, sigma_cells: float = 0.75) -> GroundTruth:
    cx, cy = grid.cell_centers()
    centers = np.stack([cx, cy], axis=-1)
    n_map, n_obj = len(MAP_CLASSES), len(scene.class_names)
    seg = np.zeros((n_map + n_obj, grid.X, grid.Y), dtype=bool)
    seg[:n_map] = map_labels(scene, centers)
    heat = np.zeros((n_obj, grid.X, grid.Y))
    reg = np.zeros((5, grid.X, grid.Y))
    reg_mask = np.zeros((grid.X, grid.Y), dtype=bool)
    flat = centers.reshape(-1, 2)
    ii, jj = np.meshgrid(np.arange(grid.X), np.arange(grid.Y), indexing="ij")
    for box in scene.boxes:
        inside = points_in_polygon(flat, box.corners()).reshape(grid.X, grid.Y)
        seg[n_map + box.class_id] |= inside
        i, j, ok = grid.cell_index(np.array([box.center]))
        if not ok[0]:
            continue
        i, j = int(i[0]), int(j[0])
        g = np.exp(-((ii - i) ** 2 + (jj - j) ** 2) / (2 * sigma_cells**2))
        g[g < math.exp(-4.5)] = 0.0
        heat[box.class_id] = np.maximum(heat[box.class_id], g)
        reg[0, i, j] = (box.center[0] - cx[i, j]) / grid.cell_size
        reg[1, i, j] = (box.center[1] - cy[i, j]) / grid.cell_size
        reg[2, i, j] = box.width
        reg[3, i, j] = box.length
        reg[4, i, j] = fold_yaw(box.yaw)
        reg_mask[i, j] = True
    return GroundTruth(seg, heat, reg, reg_mask, list(scene.boxes))


# ------------------------------------------------------------------ samples
@dataclass
class Sample:
    """One synthetic frame: the scene plus both raw sensor streams."""

    scene: Scene
    points: PointCloud
    views: MultiViewSet
    modalities: tuple[str, ...] = ("camera", "lidar")


def make_sample(seed: int, rig: SensorRig, spec: SceneSpec = SceneSpec()) -> Sample:
    scene = generate_scene(seed, spec)
    return Sample(scene, raycast_lidar(scene, rig, seed), render_views(scene, rig))


def save_sample(path, sample: Sample, rig: SensorRig) -> None:
    """Write a sample as ``.npz``: arrays plus JSON-encoded scene and rig."""
    np.savez(
        path,
        xyz=sample.points.xyz,
        intensity=sample.points.intensity,
        beam_id=sample.points.beam_id,
        azimuth=sample.points.azimuth,
        views=sample.views.features,
        scene=np.array(sample.scene.to_json()),
        rig=np.array(json.dumps(rig.to_dict(), sort_keys=True)),
        modalities=np.array(json.dumps(list(sample.modalities))),
    )


def load_sample(path) -> tuple[Sample, SensorRig]:
    with np.load(path, allow_pickle=False) as z:
        rig = SensorRig.from_dict(json.loads(str(z["rig"])))
        scene = Scene.from_json(str(z["scene"]))
        pc = PointCloud(z["xyz"], z["intensity"], z["beam_id"], z["azimuth"])
        views = MultiViewSet(z["views"], rig.cameras)
        mods = tuple(json.loads(str(z["modalities"])))
    return Sample(scene, pc, views, mods), rig
