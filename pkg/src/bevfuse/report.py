"""Report writers: JSON lines, a CSV summary table and matplotlib figures."""
from __future__ import annotations

import csv
import json
from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .metrics import MetricsReport  # noqa: E402

CSV_FIELDS = ("label", "modalities", "corruption", "degree", "miou", "ap", "retention")


def write_jsonl(reports: list[MetricsReport], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as f:
        for r in reports:
            f.write(r.to_json() + "\n")
    return path


def read_jsonl(path) -> list[MetricsReport]:
    with Path(path).open() as f:
        return [MetricsReport.from_dict(json.loads(line)) for line in f if line.strip()]


def _row(r: MetricsReport) -> dict:
    c = r.corruption or {}
    row = {
        "label": r.extra.get("label", ""),
        "modalities": "+".join(m[0].upper() for m in r.modalities),
        "corruption": c.get("kind", "clean"),
        "degree": "" if c.get("degree") is None else c["degree"],
        "miou": f"{r.miou:.4f}",
        "ap": f"{r.ap:.4f}",
        "retention": "" if r.retention is None else f"{r.retention:.4f}",
    }
    for name, v in zip(r.class_names, r.class_iou):
        row[f"iou_{name}"] = f"{v:.4f}"
    return row


def write_csv(reports: list[MetricsReport], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    rows = [_row(r) for r in reports]
    fields = list(CSV_FIELDS)
    for row in rows:
        fields += [k for k in row if k not in fields]
    with path.open("w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=fields)
        w.writeheader()
        w.writerows(rows)
    return path


def plot_summary(reports: list[MetricsReport], path) -> Path:
    """Bar chart of mIoU and AP per suite entry."""
    labels = [r.extra.get("label", str(i)) for i, r in enumerate(reports)]
    x = np.arange(len(reports))
    fig, ax = plt.subplots(figsize=(max(6, 0.35 * len(reports) + 2), 4))
    ax.bar(x - 0.2, [r.miou for r in reports], 0.4, label="mIoU")
    ax.bar(x + 0.2, [r.ap for r in reports], 0.4, label="AP@0.5")
    ax.set_xticks(x)
    ax.set_xticklabels(labels, rotation=70, ha="right", fontsize=7)
    ax.set_ylim(0, 1)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def plot_ladders(reports: list[MetricsReport], path) -> Path | None:
    """mIoU against corruption degree, one panel per corruption kind with a ladder."""
    by_kind = defaultdict(list)
    for r in reports:
        if r.corruption and r.corruption.get("degree") is not None:
            by_kind[r.corruption["kind"]].append(r)
    if not by_kind:
        return None
    kinds = sorted(by_kind)
    fig, axes = plt.subplots(1, len(kinds), figsize=(3.2 * len(kinds), 3), squeeze=False)
    for ax, kind in zip(axes[0], kinds):
        rs = by_kind[kind]
        ticks = [str(r.corruption["degree"]) for r in rs]
        ax.plot(range(len(rs)), [r.miou for r in rs], marker="o")
        ax.set_xticks(range(len(rs)))
        ax.set_xticklabels(ticks, fontsize=7)
        ax.set_title(kind, fontsize=9)
        ax.set_ylim(0, 1)
    axes[0][0].set_ylabel("mIoU")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def write_all(reports: list[MetricsReport], out_dir, stem: str = "report") -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "jsonl": write_jsonl(reports, out / f"{stem}.jsonl"),
        "csv": write_csv(reports, out / f"{stem}.csv"),
        "summary_png": plot_summary(reports, out / f"{stem}_summary.png"),
    }
    ladders = plot_ladders(reports, out / f"{stem}_ladders.png")
    if ladders is not None:
        paths["ladders_png"] = ladders
    return paths


def plot_loss(history: list[dict], path) -> Path:
    steps = [h["step"] for h in history]
    fig, ax = plt.subplots(figsize=(6, 3.5))
    for key in ("loss", "det", "seg"):
        vals = [h[key] for h in history if key in h]
        if len(vals) == len(steps) and vals:
            ax.plot(steps, vals, label=key, linewidth=0.8)
    ax.set_yscale("log")
    ax.set_xlabel("step")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def plot_table(rows: list[dict], columns: list[str], path, title: str = "") -> Path:
    """Grouped bars for a small comparison table (one group per column, one bar per row)."""
    fig, ax = plt.subplots(figsize=(6, 3.5))
    x = np.arange(len(columns))
    width = 0.8 / max(1, len(rows))
    for k, row in enumerate(rows):
        ax.bar(x + (k - (len(rows) - 1) / 2) * width, [row[c] for c in columns], width, label=row["name"])
    ax.set_xticks(x)
    ax.set_xticklabels(columns)
    ax.set_ylabel("mIoU")
    ax.set_ylim(0, 1)
    if title:
        ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)
