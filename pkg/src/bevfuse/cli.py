"""Command-line entry point: ``bevfuse {train,eval,corrupt,gradcheck,demo-table5d}``."""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from . import checkpoint as ckpt_io
from .config import load_config
from .corruptions import CorruptionSpec, apply_corruption
from .evaluation import SuiteEntry, degree_ladder, evaluate, parse_entry, standard_suite
from .report import plot_loss, write_all
from .training import eval_set, from_checkpoint, to_checkpoint, train
from .world import SceneSpec, make_sample, save_sample


def _config_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="YAML config merged over the preset")
    p.add_argument("--preset", default="switched", help="switched, vanilla, camera, lidar or tiny")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="dotted override, e.g. model.dim=64 (repeatable)")


def _config(args):
    return load_config(args.config, args.overrides, base=args.preset)


def cmd_train(args) -> int:
    cfg = _config(args)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    result = train(cfg, args.steps)
    ckpt_io.save(out, to_checkpoint(cfg, result.model, result.optimizer, result.step))
    log_path = out.with_suffix(".log.jsonl")
    with log_path.open("w") as f:
        for rec in result.history:
            f.write(json.dumps(rec, sort_keys=True) + "\n")
    if result.history:
        plot_loss(result.history, out.with_suffix(".loss.png"))
    print(f"wrote {out} after {result.step} steps; log {log_path}")
    return 0


def _suite(args) -> list[SuiteEntry]:
    entries = []
    if args.standard:
        entries += standard_suite(args.corruption_seed)
    for kind in args.ladder or ():
        entries += degree_ladder(kind, args.corruption_seed)
    for text in args.entry or ():
        entries.append(parse_entry(text, args.corruption_seed))
    return entries or [SuiteEntry()]


def cmd_eval(args) -> int:
    expected = _config(args).hash() if (args.config or args.overrides) else None
    ck = ckpt_io.load(args.checkpoint, expected, force=args.force)
    cfg, model, _ = from_checkpoint(ck)
    if args.n_eval:
        cfg = dataclasses.replace(cfg, data=dataclasses.replace(cfg.data, n_eval=args.n_eval))
    reports = evaluate(model, _suite(args), eval_set(cfg, model))
    paths = write_all(reports, args.out_dir, args.stem)
    for r in reports:
        rho = "" if r.retention is None else f"  rho {r.retention:.3f}"
        print(f"{r.extra['label']:<28} mIoU {r.miou:.4f}  AP {r.ap:.4f}{rho}")
    print("wrote " + ", ".join(str(p) for p in paths.values()))
    return 0


def cmd_corrupt(args) -> int:
    cfg = _config(args)
    rig = cfg.model.rig()
    sample = make_sample(args.seed, rig, SceneSpec(bounds=cfg.data.scene_bounds, box_count=tuple(cfg.data.box_count)))
    spec = CorruptionSpec(args.kind, args.degree, args.corruption_seed)
    out, record = apply_corruption(sample, spec)
    path = Path(args.out)
    path.parent.mkdir(parents=True, exist_ok=True)
    save_sample(path, out, rig)
    record["source_points"] = len(sample.points)
    manifest = path.with_suffix(".json")
    manifest.write_text(json.dumps(record, sort_keys=True, indent=2))
    print(json.dumps(record, sort_keys=True))
    return 0


def cmd_gradcheck(args) -> int:
    from .diagnostics import end_to_end_gradcheck

    mods = tuple(m for m, on in (("camera", "C" in args.modalities), ("lidar", "L" in args.modalities)) if on)
    res = end_to_end_gradcheck(modalities=mods, seed=args.seed, eps=args.eps)
    worst = sorted(res["errors"].items(), key=lambda kv: -kv[1])[: args.show]
    for name, err in worst:
        print(f"{err:.3e}  {name}")
    ok = res["max_error"] <= args.tol
    print(f"max relative error {res['max_error']:.3e} over {res['n_params']} parameters "
          f"in {res['seconds']:.1f}s: {'PASS' if ok else 'FAIL'} (tol {args.tol:g})")
    return 0 if ok else 1


def cmd_demo(args) -> int:
    from .experiments import demo_table5d, format_table

    cfg = _config(args)
    rows = demo_table5d(cfg, args.steps, args.out_dir)
    print(format_table(rows))
    print(f"wrote {args.out_dir}/table5d.csv, table5d.jsonl and table5d.png")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bevfuse", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log training progress")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model and write a checkpoint")
    _config_args(p)
    p.add_argument("--steps", type=int, help="override the configured step count")
    p.add_argument("--out", default="runs/model.ckpt")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="run a corruption suite against a checkpoint")
    _config_args(p)
    p.add_argument("checkpoint", type=Path)
    p.add_argument("--entry", action="append", help="suite entry such as C+L, C, L or C+L:LF=120 (repeatable)")
    p.add_argument("--ladder", action="append", help="every degree of one corruption kind, e.g. BR (repeatable)")
    p.add_argument("--standard", action="store_true", help="all modality subsets and every corruption ladder")
    p.add_argument("--corruption-seed", type=int, default=0)
    p.add_argument("--n-eval", type=int, help="override the number of evaluation scenes")
    p.add_argument("--force", action="store_true", help="load even if the config hash differs")
    p.add_argument("--out-dir", default="runs/eval")
    p.add_argument("--stem", default="report")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("corrupt", help="generate one scene, corrupt it and save the result")
    _config_args(p)
    p.add_argument("kind", help="corruption kind or short name (LF, MO, BR, VD, VN, OO, MC, ML)")
    p.add_argument("degree", nargs="?", help="degree from the kind's ladder")
    p.add_argument("--seed", type=int, default=0, help="scene seed")
    p.add_argument("--corruption-seed", type=int, default=0)
    p.add_argument("--out", default="runs/corrupted.npz")
    p.set_defaults(func=cmd_corrupt)

    p = sub.add_parser("gradcheck", help="end-to-end finite-difference check on a tiny float64 model")
    p.add_argument("--modalities", default="CL", help="any of C, L, CL")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--eps", type=float, default=1e-5)
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--show", type=int, default=5)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("demo-table5d", help="vanilla vs switched-modality training under missing sensors")
    _config_args(p)
    p.add_argument("--steps", type=int, default=12000, help="steps per regime (about 4.5 min each on one core)")
    p.add_argument("--out-dir", default="runs/table5d")
    p.set_defaults(func=cmd_demo)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (ValueError, KeyError, ckpt_io.CheckpointError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
