"""End-to-end gradient oracle on a tiny float64 model."""
from __future__ import annotations

import time
from dataclasses import replace

import numpy as np

from .config import TrainConfig, preset
from .heads import joint_loss
from .model import FusionModel
from .numerics import check_gradients, precision
from .world import SceneSpec, make_sample, rasterize_ground_truth


def end_to_end_gradcheck(cfg: TrainConfig | None = None, modalities=("camera", "lidar"), tasks=("det", "seg"),
                         seed: int = 0, eps: float = 1e-5) -> dict:
    """Max relative error per parameter between reverse-mode and central-difference gradients.

    Offset heads are randomly initialized so that sample points sit off the
    bilinear lattice, where the interpolant is not differentiable. The step
    ``eps`` trades truncation error against cancellation round-off.
    """
    cfg = cfg or preset("tiny")
    mcfg = replace(cfg.model, zero_init_heads=False)
    start = time.perf_counter()
    with precision("float64"):
        rig = mcfg.rig()
        model = FusionModel(mcfg, np.random.default_rng([seed, 0]), rig)
        sample = make_sample(seed, rig, SceneSpec(bounds=mcfg.X * mcfg.cell_size / 2, box_count=(1, 2)))
        sample = replace(sample, modalities=tuple(modalities))
        gt = rasterize_ground_truth(sample.scene, model.grid)

        def loss_fn():
            out = model(sample, tasks=tasks)
            loss, _ = joint_loss(out.seg, out.det, gt, cfg.w_det, cfg.w_seg)
            return loss

        errors = check_gradients(loss_fn, list(model.named_parameters()), eps=eps)
    return {
        "errors": errors,
        "max_error": max(errors.values()),
        "n_params": model.num_parameters(),
        "seconds": time.perf_counter() - start,
    }
