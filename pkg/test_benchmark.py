"""
基准评测测试（小数据集，单轮训练）
"""
import math

import pytest

from benchmark import REFERENCE_RESULTS, BenchmarkRunner, BenchmarkSpec, run_benchmark
from config import TrainConfig
from dataset import generate_dataset
from errors import InvalidArgumentError, InvalidStateError

FAST = TrainConfig(epochs=1, batch_size=4, timestep_stride=2)


def test_parse_arch_and_task():
    spec = BenchmarkSpec.parse("conv3d-depth-mv", "naive")
    assert spec.arch.name == "CONV3D-Depth-MV"
    assert spec.label == "CONV3D-Depth-MV_naive"
    with pytest.raises(InvalidArgumentError):
        BenchmarkSpec.parse("CONV3D-Depth-MV", "rank")
    with pytest.raises(InvalidArgumentError):
        BenchmarkSpec.parse("LSTM-Depth-MV", "length")


def test_reference_values():
    assert REFERENCE_RESULTS[("CONV3D-Depth-MV", "count")] == 0.949
    assert REFERENCE_RESULTS[("LSTM-Depth-TMP", "count")] == 0.638
    assert REFERENCE_RESULTS[("CONV3D-Depth-MV", "end-to-end")] == 0.415
    assert REFERENCE_RESULTS[("CONV3D-Depth-MV", "length")] < REFERENCE_RESULTS[("CONV3D-Depth-TMP", "length")]


def test_runner_requires_splits(tmp_path, small_params):
    manifest = generate_dataset(tmp_path, per_n=1, params=small_params, fractions=None)
    with pytest.raises(InvalidStateError):
        BenchmarkRunner(tmp_path, manifest, FAST)


def test_runner_requires_architectures(tiny_dataset):
    root, manifest = tiny_dataset
    with pytest.raises(InvalidArgumentError):
        run_benchmark(root, manifest, [], FAST)


def test_count_rows(tiny_dataset):
    root, manifest = tiny_dataset
    specs = [BenchmarkSpec.parse("CONV3D-Depth-MV"), BenchmarkSpec.parse("LSTM-Depth-TMP")]
    seen = []
    report = run_benchmark(root, manifest, specs, FAST, progress_callback=lambda m, p: seen.append(p))
    assert len(report.rows) == 2
    mv, tmp = report.rows
    assert (mv.views, mv.temporal, mv.total) == (2, 0, 2)
    assert (tmp.views, tmp.temporal, tmp.total) == (0, 4, 4)
    assert (mv.depth, mv.grey) == (1, 0)
    assert (mv.train_instances, mv.test_instances) == (6, 6)
    assert mv.test_stacks == 12 and tmp.test_stacks == 12
    for row in report.rows:
        assert 0.0 <= row.accuracy <= 1.0
        assert row.error is None and row.error_rms is None
    assert mv.reference == 0.949
    assert mv.stride == 2 and mv.seeds == [0] and mv.per_seed == [mv.accuracy]
    assert set(report.confusions) == {"CONV3D-Depth-MV", "LSTM-Depth-TMP"}
    assert report.confusions["CONV3D-Depth-MV"].total == 12
    assert report.confusions["CONV3D-Depth-MV"].accuracy() == pytest.approx(mv.accuracy)
    assert seen[-1] == 100
    assert set(report.histories) == {"CONV3D-Depth-MV_count", "LSTM-Depth-TMP_count"}


def test_length_rows(tiny_dataset):
    root, manifest = tiny_dataset
    specs = [BenchmarkSpec.parse("CONV3D-Depth-MV", task) for task in ("length", "naive", "end-to-end")]
    report = run_benchmark(root, manifest, specs, FAST)
    assert [r.task for r in report.rows] == ["length", "naive", "end-to-end"]
    for row in report.rows:
        assert row.accuracy is None
        assert row.error >= 0.0
        assert row.error_rms == pytest.approx(math.sqrt(row.error))
    assert not report.confusions
    assert "CONV3D-Depth-MV_naive_counter" in report.histories
    assert "CONV3D-Depth-MV_length_n6" in report.histories
    assert all(row.error_normalized is None for row in report.rows)


def test_grey_temporal_length_reports_normalized_error(tiny_dataset):
    root, manifest = tiny_dataset
    specs = [BenchmarkSpec.parse("CONV3D-Grey-TMP", task) for task in ("length", "end-to-end")]
    report = run_benchmark(root, manifest, specs, FAST)
    for row in report.rows:
        assert (row.grey, row.temporal) == (1, 4)
        assert row.error_normalized is not None and row.error_normalized >= 0.0
        assert math.isfinite(row.error_normalized)
        assert row.error_rms == pytest.approx(math.sqrt(row.error))


def test_multiple_seeds_average(tiny_dataset):
    root, manifest = tiny_dataset
    spec = BenchmarkSpec.parse("CONV3D-Depth-MV")
    report = run_benchmark(root, manifest, [spec], FAST, seeds=[0, 1])
    row = report.rows[0]
    assert row.seeds == [0, 1]
    assert len(row.per_seed) == 2
    assert row.accuracy == pytest.approx(sum(row.per_seed) / 2)
    single = run_benchmark(root, manifest, [spec], FAST, seeds=[1]).rows[0]
    assert row.per_seed[1] == pytest.approx(single.accuracy)
    assert report.confusions["CONV3D-Depth-MV"].total == 2 * row.test_stacks
    assert set(report.histories) == {"CONV3D-Depth-MV_count_seed0", "CONV3D-Depth-MV_count_seed1"}
    assert report.settings["seeds"] == [0, 1]
    with pytest.raises(InvalidArgumentError):
        run_benchmark(root, manifest, [spec], FAST, seeds=[1, 1])


def test_depth_scale_follows_manifest_far(tmp_dataset_copy, caplog):
    root, manifest = tmp_dataset_copy
    assert BenchmarkRunner(root, manifest, FAST).train_cfg.depth_scale == manifest.params["far"]
    manifest.params["far"] = 20.0
    with caplog.at_level("WARNING", logger="trainer"):
        runner = BenchmarkRunner(root, manifest, FAST)
    assert runner.train_cfg.depth_scale == 20.0
    assert "far=20.0" in caplog.text
