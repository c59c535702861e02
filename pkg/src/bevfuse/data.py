"""Seeded synthetic datasets with an optional on-disk cache."""
from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path

from .grid import GridSpec
from .world import GroundTruth, Sample, SceneSpec, SensorRig, load_sample, make_sample, rasterize_ground_truth, save_sample

CACHE_ENV = "BEVFUSE_CACHE_DIR"


def cache_dir() -> Path | None:
    raw = os.environ.get(CACHE_ENV)
    return Path(raw) if raw else None


class SceneSet:
    """Samples for seeds ``base_seed .. base_seed + n - 1``, built once and kept in memory.

    When ``$BEVFUSE_CACHE_DIR`` is set, samples are also read from and
    written to ``.npz`` files keyed by rig, scene spec and seed.
    """

    def __init__(self, n: int, base_seed: int, rig: SensorRig, spec: SceneSpec, grid: GridSpec):
        self.n = n
        self.base_seed = base_seed
        self.rig = rig
        self.spec = spec
        self.grid = grid
        key = json.dumps({"rig": rig.to_dict(), "spec": repr(spec)}, sort_keys=True)
        self.key = hashlib.sha256(key.encode()).hexdigest()[:16]
        self._items: dict[int, tuple[Sample, GroundTruth]] = {}

    def __len__(self) -> int:
        return self.n

    def _path(self, seed: int) -> Path | None:
        root = cache_dir()
        return None if root is None else root / f"scene_{self.key}_{seed}.npz"

    def _build(self, seed: int) -> Sample:
        path = self._path(seed)
        if path is not None and path.exists():
            sample, _ = load_sample(path)
            return sample
        sample = make_sample(seed, self.rig, self.spec)
        if path is not None:
            path.parent.mkdir(parents=True, exist_ok=True)
            tmp = path.with_name(path.stem + ".part.npz")
            save_sample(tmp, sample, self.rig)
            tmp.replace(path)
        return sample

    def __getitem__(self, k: int) -> tuple[Sample, GroundTruth]:
        if not 0 <= k < self.n:
            raise IndexError(k)
        if k not in self._items:
            sample = self._build(self.base_seed + k)
            self._items[k] = (sample, rasterize_ground_truth(sample.scene, self.grid))
        return self._items[k]
