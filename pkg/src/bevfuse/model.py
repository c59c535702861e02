"""End-to-end network: both sensor branches, the fusion decoder and the task heads."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .decoder import MODALITIES, Decoder, DecoderConfig
from .encoders import CameraBranch, DepthBins, LidarBranch, SplatGeometry, pillarize
from .grid import BEVGrid, GridSpec
from .heads import DetHead, DetPrediction, SegHead, SegPrediction
from .moe import TASKS
from .numerics import Module
from .world import OBJECT_CLASSES, Sample, SensorRig, default_rig, seg_class_names, view_channels


@dataclass
class ModelConfig:
    X: int = 24
    Y: int = 24
    cell_size: float = 1.5
    image_size: tuple[int, int] = (16, 44)
    n_views: int = 6
    depth_bins: int = 12
    depth_near: float = 1.0
    depth_far: float = 30.0
    dim: int = 32
    cam_hidden: int = 32
    lift_channels: int = 16
    lidar_hidden: int = 32
    head_hidden: int = 32
    n_heads: int = 4
    n_points: int = 4
    n_cross: int = 2
    n_self: int = 1
    ffn: str = "plain"
    ffn_hidden: int = 64
    n_experts: int = 4
    top_t: int = 2
    balance_loss: bool = False
    zero_init_heads: bool = True
    object_classes: tuple[str, ...] = OBJECT_CLASSES

    def grid(self) -> GridSpec:
        return GridSpec(self.X, self.Y, self.cell_size, z_range=(-3.0, 6.0))

    def bins(self) -> DepthBins:
        return DepthBins(self.depth_near, self.depth_far, self.depth_bins)

    def rig(self) -> SensorRig:
        return default_rig(self.n_views, tuple(self.image_size))

    def decoder_config(self) -> DecoderConfig:
        return DecoderConfig(
            X=self.X, Y=self.Y, dim=self.dim, n_heads=self.n_heads, n_points=self.n_points,
            n_cross=self.n_cross, n_self=self.n_self, ffn=self.ffn, hidden=self.ffn_hidden,
            n_experts=self.n_experts, top_t=self.top_t, balance_loss=self.balance_loss,
            zero_init_heads=self.zero_init_heads, modalities=MODALITIES,
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["image_size"] = list(self.image_size)
        d["object_classes"] = list(self.object_classes)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        if "image_size" in d:
            d["image_size"] = tuple(d["image_size"])
        if "object_classes" in d:
            d["object_classes"] = tuple(d["object_classes"])
        return cls(**d)


@dataclass
class ModelOutput:
    fused: BEVGrid
    seg: SegPrediction | None = None
    det: DetPrediction | None = None
    branches: dict = field(default_factory=dict)


class FusionModel(Module):
    def __init__(self, cfg: ModelConfig, rng: np.random.Generator, rig: SensorRig | None = None):
        self.cfg = cfg
        self.grid = cfg.grid()
        n_obj = len(cfg.object_classes)
        self.camera = CameraBranch(view_channels(cfg.object_classes), cfg.cam_hidden, cfg.lift_channels,
                                   cfg.dim, cfg.bins(), rng)
        self.lidar = LidarBranch(cfg.lidar_hidden, cfg.dim, rng)
        self.decoder = Decoder(cfg.decoder_config(), rng)
        self.seg_head = SegHead(cfg.dim, cfg.head_hidden, len(seg_class_names(cfg.object_classes)), rng)
        self.det_head = DetHead(cfg.dim, cfg.head_hidden, n_obj, rng)
        self._geometry: SplatGeometry | None = None
        if rig is not None:
            self.bind_rig(rig)

    def bind_rig(self, rig: SensorRig) -> None:
        self._geometry = SplatGeometry(rig.cameras, self.grid, self.cfg.bins())

    @property
    def geometry(self) -> SplatGeometry:
        if self._geometry is None:
            self.bind_rig(self.cfg.rig())
        return self._geometry

    def branch_features(self, sample: Sample, modalities) -> dict[str, BEVGrid]:
        feats = {}
        if "camera" in modalities:
            feats["camera"] = self.camera(sample.views, self.geometry)
        if "lidar" in modalities:
            feats["lidar"] = self.lidar(pillarize(sample.points, self.grid))
        return feats

    def __call__(self, sample: Sample, modalities=None, tasks=TASKS) -> ModelOutput:
        mods = tuple(sample.modalities if modalities is None else modalities)
        if not mods:
            raise ValueError("no modality: at least one sensor stream is required")
        unknown = set(mods) - set(MODALITIES)
        if unknown:
            raise ValueError(f"unknown modality {sorted(unknown)}")
        tasks = tuple(t for t in TASKS if t in set(tasks))
        if not tasks:
            raise ValueError("at least one task must be active")
        feats = self.branch_features(sample, mods)
        fused = self.decoder({m: g.data for m, g in feats.items()}, tasks=tasks, grid=self.grid)
        out = ModelOutput(fused, branches=feats)
        if "seg" in tasks:
            out.seg = self.seg_head(fused)
        if "det" in tasks:
            out.det = self.det_head(fused)
        return out

    def branch_parameters(self, modality: str) -> list[tuple[str, object]]:
        """Parameters used only when ``modality`` is present: its encoder and its offset/weight heads."""
        if modality not in MODALITIES:
            raise ValueError(f"unknown modality {modality!r}")
        enc = self.camera if modality == "camera" else self.lidar
        out = [(f"{modality}.{n}", p) for n, p in enc.named_parameters()]
        for k, layer in enumerate(self.decoder.cross_layers):
            out += [(f"decoder.cross_layers.{k}.heads.{modality}.{n}", p)
                    for n, p in layer.heads[modality].named_parameters()]
        return out
