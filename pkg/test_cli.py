"""
命令行测试
"""
import csv
import json

import pytest

from cli import build_parser, main, parse_fractions, parse_resolution, parse_seeds, resolve_config
from config import Config
from errors import InvalidArgumentError
from manifest import DatasetManifest
from test_instance_codec import _rewrite_header

GEN_FLAGS = ["--per-n", "2", "--frames", "4", "--rig", "2", "--res", "15x11", "--seed", "7",
             "--split", "0.5,0,0.5"]


@pytest.fixture(autouse=True)
def log_file(tmp_path, monkeypatch):
    path = tmp_path / "logs" / "linkbench.log"
    monkeypatch.setattr(Config, "LOG_FILE", path)
    return path


def _resolve(argv):
    return resolve_config(build_parser().parse_args(argv))


def test_parse_helpers():
    assert parse_resolution("128x96") == (128, 96)
    assert parse_fractions("0.6, 0.1, 0.3") == [0.6, 0.1, 0.3]
    with pytest.raises(InvalidArgumentError):
        parse_resolution("wide")
    with pytest.raises(InvalidArgumentError):
        parse_resolution("0x10")
    with pytest.raises(InvalidArgumentError):
        parse_fractions("0.5,0.5")
    assert parse_seeds("0, 1,2") == [0, 1, 2]
    with pytest.raises(InvalidArgumentError):
        parse_seeds("0,x")


def test_generate_and_regenerate(tmp_path, capsys):
    assert main(["generate", "--data", str(tmp_path / "a")] + GEN_FLAGS) == 0
    out = capsys.readouterr().out
    line = out.splitlines()[0]
    assert line.startswith("effective config: ")
    effective = json.loads(line[len("effective config: "):])
    assert effective["per_n"] == 2
    assert effective["generation"]["img_w"] == 15 and effective["generation"]["rig_size"] == 2

    manifest = DatasetManifest.load(tmp_path / "a")
    assert len(manifest.entries) == 12
    assert len(list((tmp_path / "a" / "instances").glob("*.kcb"))) == 12

    assert main(["generate", "--data", str(tmp_path / "b")] + GEN_FLAGS) == 0
    again = DatasetManifest.load(tmp_path / "b")
    assert [e.crc32 for e in again.entries] == [e.crc32 for e in manifest.entries]


def test_invalid_flags_write_nothing(tmp_path, capsys):
    target = tmp_path / "never"
    assert main(["generate", "--data", str(target), "--split", "0.5,0.5,0.5"]) == 1
    assert main(["generate", "--data", str(target), "--res", "abc"]) == 1
    assert main(["generate", "--data", str(target), "--jobs", "0"]) == 1
    assert not target.exists()
    assert "错误 (generate)" in capsys.readouterr().err


def test_multiview_needs_two_cameras(tmp_path):
    config = tmp_path / "rig.env"
    config.write_text("RIG=1\n", encoding="utf-8")
    with pytest.raises(InvalidArgumentError):
        _resolve(["train", "--config", str(config), "--arch", "CONV3D-Depth-MV"])
    assert _resolve(["train", "--config", str(config), "--arch", "CONV3D-Depth-TMP"]).generation.rig_size == 1
    assert _resolve(["generate", "--config", str(config)]).generation.rig_size == 1


def test_config_file_precedence(tmp_path):
    config = tmp_path / "settings.env"
    config.write_text("PER_N=3\nEPOCHS=5\nRES=32x24\n", encoding="utf-8")
    cfg = _resolve(["generate", "--config", str(config), "--per-n", "2"])
    assert cfg.per_n == 2
    assert cfg.train.epochs == 5
    assert (cfg.generation.img_w, cfg.generation.img_h) == (32, 24)

    config.write_text("COLOUR=red\n", encoding="utf-8")
    with pytest.raises(InvalidArgumentError):
        _resolve(["generate", "--config", str(config)])
    with pytest.raises(InvalidArgumentError):
        _resolve(["generate", "--config", str(tmp_path / "missing.env")])


def test_effective_config_json_roundtrip(tmp_path):
    cfg = _resolve(["train", "--data", str(tmp_path), "--epochs", "3", "--lr", "0.01", "--no-deterministic"])
    assert cfg.train.deterministic is False
    dumped = tmp_path / "effective.json"
    dumped.write_text(cfg.effective_line(), encoding="utf-8")
    assert _resolve(["train", "--config", str(dumped)]).model_dump() == cfg.model_dump()


def test_missing_manifest(tmp_path):
    assert main(["eval", "--data", str(tmp_path)]) == 1
    assert main(["inspect", "--data", str(tmp_path), "--id", "n1_000000"]) == 1
    assert main(["inspect", "--data", str(tmp_path)]) == 1


def test_train_writes_checkpoint_and_history(tiny_dataset, tmp_path):
    root, _ = tiny_dataset
    out = tmp_path / "out"
    code = main(["train", "--data", str(root), "--out", str(out), "--arch", "CONV3D-Depth-MV",
                 "--task", "count", "--epochs", "2", "--stride", "2", "--batch-size", "4"])
    assert code == 0
    assert (out / "CONV3D-Depth-MV_count.knn").exists()
    with open(out / "CONV3D-Depth-MV_count_history.csv", newline="", encoding="utf-8") as f:
        assert len(list(csv.DictReader(f))) == 2


def test_train_rejects_multiple_archs(tiny_dataset, tmp_path):
    root, _ = tiny_dataset
    assert main(["train", "--data", str(root), "--out", str(tmp_path),
                 "--arch", "CONV3D-Depth-MV,LSTM-Depth-TMP"]) == 1


def test_eval_writes_report(tiny_dataset, tmp_path, capsys):
    root, _ = tiny_dataset
    out = tmp_path / "reports"
    code = main(["eval", "--data", str(root), "--out", str(out), "--arch", "CONV3D-Depth-MV",
                 "--task", "count", "--epochs", "1", "--stride", "2", "--format", "csv", "--report"])
    assert code == 0
    reports = list(out.glob("report_*.csv"))
    assert len(reports) == 1
    with open(reports[0], newline="", encoding="utf-8") as f:
        rows = list(csv.DictReader(f))
    assert rows[0]["name"] == "CONV3D-Depth-MV" and rows[0]["task"] == "count"
    assert (out / "confusion_CONV3D-Depth-MV.pgm").exists()
    assert "Architecture" in capsys.readouterr().out


def test_inspect_writes_pgms(tiny_dataset, tmp_path, capsys):
    root, manifest = tiny_dataset
    entry = manifest.entries[4]
    assert main(["inspect", "--data", str(root), "--out", str(tmp_path), "--id", entry.id, "--t", "1"]) == 0
    folder = tmp_path / f"inspect_{entry.id}_t1"
    files = sorted(p.name for p in folder.glob("*.pgm"))
    assert files == ["cam0_depth.pgm", "cam0_gray.pgm", "cam1_depth.pgm", "cam1_gray.pgm"]
    assert (folder / "cam0_depth.pgm").read_bytes().startswith(b"P5\n15 11\n255\n")
    out = capsys.readouterr().out
    assert f"n={entry.n}" in out

    assert main(["inspect", "--data", str(root), "--out", str(tmp_path), "--id", entry.id, "--t", "9"]) == 1
    assert main(["inspect", "--data", str(root), "--out", str(tmp_path), "--id", "n9_999999"]) == 1


def test_desk_preset_sits_below_config_file(tmp_path, caplog):
    desk = _resolve(["generate", "--desk"]).generation
    assert (desk.img_w, desk.img_h) == (64, 48)
    env = tmp_path / "desk.env"
    env.write_text("DESK=true\nFRAMES=5\n", encoding="utf-8")
    cfg = _resolve(["generate", "--config", str(env)])
    assert (cfg.generation.img_w, cfg.generation.img_h, cfg.generation.frames) == (64, 48, 5)

    dumped = tmp_path / "effective.json"
    dumped.write_text(_resolve(["generate", "--frames", "5"]).effective_line(), encoding="utf-8")
    with caplog.at_level("WARNING", logger="cli"):
        cfg = _resolve(["generate", "--config", str(dumped), "--desk"])
    assert (cfg.generation.img_w, cfg.generation.img_h) == (128, 96)
    assert "覆盖了 --desk" in caplog.text

    caplog.clear()
    partial = tmp_path / "partial.json"
    partial.write_text(json.dumps({"command": "generate", "generation": {"frames": 5}}), encoding="utf-8")
    with caplog.at_level("WARNING", logger="cli"):
        cfg = _resolve(["generate", "--config", str(partial), "--desk"])
    assert (cfg.generation.img_w, cfg.generation.img_h, cfg.generation.frames) == (64, 48, 5)
    assert "--desk" not in caplog.text
    assert _resolve(["generate", "--config", str(dumped), "--desk", "--res", "32x24"]).generation.img_w == 32


def test_eval_seeds_flag(tiny_dataset, tmp_path):
    root, _ = tiny_dataset
    assert _resolve(["eval", "--seeds", "3,4"]).seeds == (3, 4)
    assert _resolve(["eval"]).seeds is None
    with pytest.raises(InvalidArgumentError):
        _resolve(["eval", "--seeds", "1,1"])
    out = tmp_path / "seeds"
    assert main(["eval", "--data", str(root), "--out", str(out), "--arch", "CONV3D-Depth-MV",
                 "--epochs", "1", "--stride", "2", "--format", "csv", "--seeds", "0,1"]) == 0
    with open(next(out.glob("report_*.csv")), newline="", encoding="utf-8") as f:
        row = next(csv.DictReader(f))
    assert row["seeds"] == "0;1" and len(row["per_seed"].split(";")) == 2
    assert row["stride"] == "2"


def test_main_always_logs_to_file(tmp_path, log_file):
    assert main(["eval", "--data", str(tmp_path / "empty")]) == 1
    assert "eval 失败" in log_file.read_text(encoding="utf-8")


def test_corrupt_instance_header_exits_with_error(tmp_dataset_copy, tmp_path, capsys):
    root, manifest = tmp_dataset_copy
    entry = manifest.entries[0]
    path = root / entry.file
    path.write_bytes(_rewrite_header(path.read_bytes(), params={"frames": -1}))
    assert main(["inspect", "--data", str(root), "--out", str(tmp_path), "--id", entry.id]) == 1
    assert "错误 (inspect)" in capsys.readouterr().err
