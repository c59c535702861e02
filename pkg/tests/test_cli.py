import json

import numpy as np
import pytest

from bevfuse.cli import main
from bevfuse.world import load_sample

TINY = ["--preset", "tiny"]


@pytest.fixture(scope="module")
def ckpt(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli") / "m.ckpt"
    assert main(["train", *TINY, "--steps", "3", "--out", str(out)]) == 0
    return out


def test_train_writes_artifacts(ckpt):
    assert ckpt.exists()
    log = ckpt.with_suffix(".log.jsonl").read_text().splitlines()
    assert len(log) == 3 and "loss" in json.loads(log[0])
    assert ckpt.with_suffix(".loss.png").stat().st_size > 0


def test_eval_outputs(ckpt, tmp_path, capsys):
    assert main(["eval", str(ckpt), "--ladder", "BR", "--entry", "L", "--out-dir", str(tmp_path)]) == 0
    lines = (tmp_path / "report.jsonl").read_text().splitlines()
    assert len(lines) == 6
    assert (tmp_path / "report.csv").exists() and (tmp_path / "report_summary.png").exists()
    assert (tmp_path / "report_ladders.png").exists()
    assert "BeamReduction:16" in capsys.readouterr().out


def test_eval_hash_mismatch(ckpt, tmp_path, capsys):
    args = ["eval", str(ckpt), *TINY, "--set", "seed=7", "--out-dir", str(tmp_path)]
    assert main(args) == 2
    assert "hash" in capsys.readouterr().err
    assert main(args + ["--force"]) == 0


def test_eval_rejects_double_drop(ckpt, tmp_path):
    assert main(["eval", str(ckpt), "--entry", "L:ML", "--out-dir", str(tmp_path)]) == 2


def test_corrupt(tmp_path, capsys):
    out = tmp_path / "c.npz"
    assert main(["corrupt", *TINY, "BR", "4", "--seed", "2", "--out", str(out)]) == 0
    record = json.loads(out.with_suffix(".json").read_text())
    sample, _ = load_sample(out)
    assert record["kind"] == "BeamReduction" and record["retained_points"] == len(sample.points)
    assert set(np.unique(sample.points.beam_id) % 8) == {0}


def test_corrupt_bad_degree(tmp_path):
    assert main(["corrupt", *TINY, "LF", "90", "--out", str(tmp_path / "x.npz")]) == 2


def test_gradcheck_cli(capsys):
    assert main(["gradcheck", "--modalities", "L"]) == 0
    assert "PASS" in capsys.readouterr().out


def test_bad_override():
    assert main(["train", *TINY, "--set", "model.bogus=1", "--steps", "0", "--out", "/tmp/none.ckpt"]) == 2


def test_demo_table5d_outputs(tmp_path, capsys):
    assert main(["demo-table5d", *TINY, "--steps", "2", "--out-dir", str(tmp_path)]) == 0
    for name in ("table5d.csv", "table5d.jsonl", "table5d.png", "loss_vanilla.png", "loss_switched.png"):
        assert (tmp_path / name).stat().st_size > 0
    rows = [json.loads(line) for line in (tmp_path / "table5d.jsonl").read_text().splitlines()]
    assert [r["name"] for r in rows] == ["vanilla", "switched"]
    assert "missing_lidar" in capsys.readouterr().out
