"""Vanilla versus switched-modality training under missing sensors."""
from __future__ import annotations

import csv
import dataclasses
import json
from pathlib import Path

from .config import RATIO_PRESETS, TrainConfig
from .evaluation import SuiteEntry, evaluate
from .report import plot_loss, plot_table
from .training import eval_set, train

COLUMNS = ("full", "missing_lidar", "missing_camera")
SUITE = (SuiteEntry(("camera", "lidar")), SuiteEntry(("camera",)), SuiteEntry(("lidar",)))


def demo_table5d(base: TrainConfig, steps: int | None = None, out_dir=None) -> list[dict]:
    """Train both regimes with one budget and evaluate each on {C,L}, {C} and {L}.

    Returns two rows, ``vanilla`` then ``switched``, with mIoU per column.
    """
    rows = []
    for name in ("vanilla", "switched"):
        cfg = dataclasses.replace(base, ratios=RATIO_PRESETS[name])
        result = train(cfg, steps)
        reports = evaluate(result.model, list(SUITE), eval_set(cfg, result.model))
        row = {"name": name, **{c: r.miou for c, r in zip(COLUMNS, reports)},
               **{f"ap_{c}": r.ap for c, r in zip(COLUMNS, reports)}}
        rows.append(row)
        if out_dir is not None:
            out = Path(out_dir)
            out.mkdir(parents=True, exist_ok=True)
            plot_loss(result.history, out / f"loss_{name}.png")
    if out_dir is not None:
        out = Path(out_dir)
        with (out / "table5d.csv").open("w", newline="") as f:
            w = csv.DictWriter(f, fieldnames=list(rows[0]))
            w.writeheader()
            w.writerows(rows)
        with (out / "table5d.jsonl").open("w") as f:
            for row in rows:
                f.write(json.dumps(row, sort_keys=True) + "\n")
        plot_table(rows, list(COLUMNS), out / "table5d.png", "mIoU by available modality")
    return rows


def format_table(rows: list[dict]) -> str:
    head = f"{'training':<10}" + "".join(f"{c:>16}" for c in COLUMNS)
    lines = [head, "-" * len(head)]
    for r in rows:
        lines.append(f"{r['name']:<10}" + "".join(f"{r[c]:>16.4f}" for c in COLUMNS))
    return "\n".join(lines)
