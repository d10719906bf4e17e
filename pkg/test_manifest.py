"""
数据集清单测试
"""
import json

import pytest

from errors import FormatError, FormatVersionError, InvalidArgumentError
from manifest import MANIFEST_NAME, DatasetManifest, ManifestEntry


def make_entry(n: int, index: int, split=None) -> ManifestEntry:
    return ManifestEntry(
        id=f"n{n}_{index:06d}", n=n, lengths=[1.0] + [0.3] * n, seed=index,
        file=f"instances/n{n}_{index:06d}.kcb", size=0, crc32=0,
        header_length=0, payload_offset=0, trajectory_offset=0, split=split,
    )


def test_save_load_roundtrip(tmp_path):
    manifest = DatasetManifest(params={"frames": 4}, base_seed=3)
    manifest.add_entry(make_entry(1, 0, "train"))
    manifest.add_entry(make_entry(2, 1, "test"))
    manifest.save(tmp_path)
    loaded = DatasetManifest.load(tmp_path)
    assert loaded.to_dict() == manifest.to_dict()
    assert loaded.get_entry("n2_000001").split == "test"
    assert loaded.get_entry("missing") is None


def test_duplicate_id_rejected():
    manifest = DatasetManifest()
    manifest.add_entry(make_entry(1, 0))
    with pytest.raises(InvalidArgumentError):
        manifest.add_entry(make_entry(1, 0))


def test_version_mismatch(tmp_path):
    DatasetManifest().save(tmp_path)
    path = tmp_path / MANIFEST_NAME
    data = json.loads(path.read_text(encoding="utf-8"))
    data["format_version"] = 99
    path.write_text(json.dumps(data), encoding="utf-8")
    with pytest.raises(FormatVersionError):
        DatasetManifest.load(tmp_path)


def test_corrupt_json(tmp_path):
    (tmp_path / MANIFEST_NAME).write_text("{not json", encoding="utf-8")
    with pytest.raises(FormatError):
        DatasetManifest.load(tmp_path)


def test_splits_and_statistics():
    manifest = DatasetManifest()
    assert not manifest.has_splits()
    manifest.add_entry(make_entry(1, 0, "train"))
    manifest.add_entry(make_entry(1, 1, "test"))
    manifest.add_entry(make_entry(3, 2, "train"))
    assert manifest.has_splits()
    assert [e.id for e in manifest.split_entries("train")] == ["n1_000000", "n3_000002"]
    stats = manifest.get_statistics()
    assert stats["total"] == 3
    assert stats["per_n"] == {1: 2, 3: 1}
    assert stats["per_split"] == {"train": 2, "test": 1}


def test_verify_reports_problems(tmp_dataset_copy):
    root, manifest = tmp_dataset_copy
    assert manifest.verify(root) == []
    first, second = manifest.entries[0], manifest.entries[1]
    (root / first.file).unlink()
    path = root / second.file
    data = bytearray(path.read_bytes())
    data[-5] ^= 0x01
    path.write_bytes(bytes(data))
    problems = manifest.verify(root)
    assert len(problems) == 2
    assert first.file in problems[0] and second.file in problems[1]
