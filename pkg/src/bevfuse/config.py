"""Training configuration: nested dataclasses, YAML files, dotted overrides and presets."""
from __future__ import annotations

import copy
import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .model import ModelConfig

RATIO_PRESETS = {
    "switched": (1 / 3, 1 / 3, 1 / 3),
    "vanilla": (0.0, 0.0, 1.0),
    "camera": (1.0, 0.0, 0.0),
    "lidar": (0.0, 1.0, 0.0),
}


@dataclass
class OptimConfig:
    lr_min: float = 2e-4
    lr_max: float = 3e-3
    cycle_steps: int = 1000
    weight_decay: float = 0.05
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    grad_clip: float = 10.0


@dataclass
class DataConfig:
    n_train: int = 256
    n_eval: int = 64
    train_seed: int = 0
    eval_seed: int = 100_000
    box_count: tuple[int, int] = (2, 6)
    scene_bounds: float = 20.0


@dataclass
class TrainConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    optim: OptimConfig = field(default_factory=OptimConfig)
    data: DataConfig = field(default_factory=DataConfig)
    ratios: tuple[float, float, float] = RATIO_PRESETS["switched"]  # camera-only, lidar-only, both
    w_det: float = 10.0
    w_seg: float = 1.0
    w_balance: float = 0.01
    tasks: tuple[str, ...] = ("det", "seg")
    steps: int = 2000
    seed: int = 0
    in_domain: bool = False
    corrupt_prob: float = 0.5
    log_every: int = 50

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        r = tuple(float(x) for x in self.ratios)
        if len(r) != 3 or min(r) < 0 or abs(sum(r) - 1.0) > 1e-9:
            raise ValueError(f"modality ratios must be 3 nonnegative values summing to 1, got {self.ratios}")
        if self.model.ffn not in ("plain", "rmoe", "hmoe"):
            raise ValueError(f"unknown FFN kind {self.model.ffn!r}")
        if self.steps < 0:
            raise ValueError("steps must be nonnegative")
        if not set(self.tasks) <= {"det", "seg"} or not self.tasks:
            raise ValueError(f"tasks must be a non-empty subset of det/seg, got {self.tasks}")
        if self.data.n_train < 1 or self.data.n_eval < 1:
            raise ValueError("need at least one train and one eval scene")

    def to_dict(self) -> dict:
        return _plain(dataclasses.asdict(self))

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = copy.deepcopy(d)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise KeyError(f"unknown config keys {sorted(unknown)}")
        model = ModelConfig.from_dict(d.pop("model", {}))
        optim = OptimConfig(**d.pop("optim", {}))
        data = d.pop("data", {})
        if "box_count" in data:
            data["box_count"] = tuple(data["box_count"])
        for key in ("ratios", "tasks"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(model=model, optim=optim, data=DataConfig(**data), **d)

    def hash(self) -> bytes:
        """SHA-256 of the canonical JSON form."""
        text = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).digest()

    def save(self, path) -> None:
        Path(path).write_text(yaml.safe_dump(self.to_dict(), sort_keys=True))


def _plain(value):
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value


def apply_overrides(d: dict, overrides: list[str]) -> dict:
    """Apply ``a.b.c=value`` strings; values are parsed as YAML scalars or lists."""
    d = copy.deepcopy(d)
    for item in overrides or ():
        if "=" not in item:
            raise ValueError(f"override {item!r} is not key=value")
        key, raw = item.split("=", 1)
        parts = key.strip().split(".")
        node = d
        for p in parts[:-1]:
            if p not in node or not isinstance(node[p], dict):
                raise KeyError(f"unknown config key {key!r}")
            node = node[p]
        if parts[-1] not in node:
            raise KeyError(f"unknown config key {key!r}")
        node[parts[-1]] = yaml.safe_load(raw)
    return d


def preset(name: str) -> TrainConfig:
    """Named configurations; ``switched``/``vanilla`` differ only in modality ratios."""
    if name in RATIO_PRESETS:
        return TrainConfig(ratios=RATIO_PRESETS[name])
    if name == "tiny":
        model = ModelConfig(X=8, Y=8, cell_size=4.0, image_size=(4, 8), n_views=2, depth_bins=4, dim=8,
                            cam_hidden=8, lift_channels=4, lidar_hidden=8, head_hidden=8, n_heads=2, n_points=2,
                            ffn_hidden=8, n_experts=3)
        return TrainConfig(model=model, data=DataConfig(n_train=4, n_eval=2), steps=20)
    raise KeyError(f"unknown preset {name!r}; choose from {sorted(RATIO_PRESETS) + ['tiny']}")


def load_config(path=None, overrides: list[str] | None = None, base: str = "switched") -> TrainConfig:
    """Start from a preset, merge a YAML file over it, then apply dotted overrides."""
    d = preset(base).to_dict()
    if path is not None:
        loaded = yaml.safe_load(Path(path).read_text()) or {}
        if not isinstance(loaded, dict):
            raise ValueError(f"{path}: top level must be a mapping")
        d = _merge(d, loaded)
    return TrainConfig.from_dict(apply_overrides(d, overrides or []))


def _merge(base: dict, top: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in top.items():
        if k not in out:
            raise KeyError(f"unknown config key {k!r}")
        if isinstance(v, dict) and isinstance(out[k], dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out
