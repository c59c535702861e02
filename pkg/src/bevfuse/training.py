"""Switched-modality training loop and checkpoint conversion."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Iterator

import numpy as np

from . import checkpoint as ckpt_io
from .config import TrainConfig
from .corruptions import apply_corruption, random_corruption
from .data import SceneSet
from .heads import joint_loss
from .model import FusionModel
from .optim import AdamW, triangular_lr
from .world import SceneSpec

log = logging.getLogger(__name__)

SUBSETS = (("camera",), ("lidar",), ("camera", "lidar"))


class TrainingDiverged(RuntimeError):
    pass


def switched_modality_sampler(seed: int, ratios=(1 / 3, 1 / 3, 1 / 3)) -> Iterator[tuple[str, ...]]:
    """Endless i.i.d. draws over camera-only, lidar-only and both."""
    p = np.asarray(ratios, dtype=np.float64)
    if p.shape != (3,) or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
        raise ValueError(f"ratios must be 3 nonnegative values summing to 1, got {ratios}")
    rng = np.random.default_rng([seed, 2])
    cdf = np.cumsum(p)
    while True:
        k = int(np.searchsorted(cdf, rng.random(), side="right"))
        yield SUBSETS[min(k, 2)]


def build_model(cfg: TrainConfig) -> FusionModel:
    return FusionModel(cfg.model, np.random.default_rng([cfg.seed, 0]), cfg.model.rig())


def train_set(cfg: TrainConfig, model: FusionModel) -> SceneSet:
    spec = SceneSpec(bounds=cfg.data.scene_bounds, box_count=tuple(cfg.data.box_count))
    return SceneSet(cfg.data.n_train, cfg.data.train_seed, cfg.model.rig(), spec, model.grid)


def eval_set(cfg: TrainConfig, model: FusionModel) -> SceneSet:
    spec = SceneSpec(bounds=cfg.data.scene_bounds, box_count=tuple(cfg.data.box_count))
    return SceneSet(cfg.data.n_eval, cfg.data.eval_seed, cfg.model.rig(), spec, model.grid)


@dataclass
class TrainResult:
    model: FusionModel
    optimizer: AdamW
    step: int
    history: list[dict] = field(default_factory=list)

    def checkpoint(self, cfg: TrainConfig) -> ckpt_io.Checkpoint:
        return to_checkpoint(cfg, self.model, self.optimizer, self.step)


def to_checkpoint(cfg: TrainConfig, model: FusionModel, opt: AdamW | None, step: int) -> ckpt_io.Checkpoint:
    return ckpt_io.Checkpoint(cfg.to_dict(), cfg.hash(), model.state_dict(),
                              opt.state_arrays() if opt is not None else {}, step)


def from_checkpoint(ck: ckpt_io.Checkpoint) -> tuple[TrainConfig, FusionModel, AdamW]:
    cfg = TrainConfig.from_dict(ck.config)
    model = build_model(cfg)
    model.load_state_dict(ck.params)
    opt = make_optimizer(cfg, model)
    opt.load_state_arrays(ck.optim)
    return cfg, model, opt


def make_optimizer(cfg: TrainConfig, model: FusionModel) -> AdamW:
    o = cfg.optim
    return AdamW(list(model.named_parameters()), o.weight_decay, o.beta1, o.beta2, o.eps, o.grad_clip)


def train(cfg: TrainConfig, steps: int | None = None, dataset: SceneSet | None = None,
          callback: Callable[[dict], None] | None = None) -> TrainResult:
    """Run ``steps`` optimizer updates (default ``cfg.steps``) from the seeded initialization.

    Every step draws a cached scene, optionally corrupts it (in-domain runs),
    draws a modality subset and applies one AdamW update on the joint loss.
    """
    steps = cfg.steps if steps is None else steps
    model = build_model(cfg)
    data = dataset or train_set(cfg, model)
    opt = make_optimizer(cfg, model)
    sampler = switched_modality_sampler(cfg.seed, cfg.ratios)
    rng = np.random.default_rng([cfg.seed, 1])
    history = []
    for step in range(steps):
        sample, gt = data[int(rng.integers(len(data)))]
        corruption = None
        if cfg.in_domain and rng.random() < cfg.corrupt_prob:
            spec = random_corruption(rng, cfg.model.n_views)
            sample, _ = apply_corruption(sample, spec)
            corruption = spec.label()
        mods = next(sampler)
        sample = replace(sample, modalities=mods)
        try:
            out = model(sample, tasks=cfg.tasks)
            loss, parts = joint_loss(out.seg, out.det, gt, cfg.w_det, cfg.w_seg)
        except (ValueError, FloatingPointError) as e:
            if "finite" not in str(e):
                raise
            raise TrainingDiverged(f"non-finite activations at step {step} (modalities={mods}): {e}") from e
        aux = model.decoder.aux_losses()
        if aux and cfg.w_balance:
            for a in aux:
                loss = loss + a * cfg.w_balance
        value = float(loss.data)
        if not math.isfinite(value):
            raise TrainingDiverged(f"loss became {value} at step {step} (modalities={mods}, parts={parts}, "
                                   f"corruption={corruption})")
        opt.zero_grad()
        loss.backward()
        lr = triangular_lr(step, cfg.optim.lr_min, cfg.optim.lr_max, cfg.optim.cycle_steps)
        opt.step(lr)
        bad = [n for n, p in opt.params if not np.all(np.isfinite(p.data))]
        if bad:
            raise TrainingDiverged(f"non-finite parameters after step {step}: {bad[:5]} (loss {value}, "
                                   f"modalities={mods})")
        rec = {"step": step, "loss": value, "lr": lr, "modalities": list(mods), **parts}
        if corruption:
            rec["corruption"] = corruption
        history.append(rec)
        if callback is not None:
            callback(rec)
        if cfg.log_every and step % cfg.log_every == 0:
            log.info("step %d loss %.4f %s", step, value, parts)
    return TrainResult(model, opt, steps, history)
