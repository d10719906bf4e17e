"""
报告导出测试
"""
import csv
import math

import pytest

from benchmark import BenchmarkReport, ReportRow
from errors import InvalidArgumentError
from metrics import confusion
from report_generator import (CsvReportGenerator, MarkdownReportGenerator, ReportGeneratorFactory,
                              TextReportGenerator, export_confusions, format_value)


@pytest.fixture
def report():
    common = dict(grey=0, depth=1, temporal=0, views=8, total=8, train_instances=12, test_instances=6,
                  train_stacks=120, test_stacks=60)
    rows = [
        ReportRow(name="CONV3D-Depth-MV", task="count", accuracy=0.95, reference=0.949, **common),
        ReportRow(name="CONV3D-Depth-MV", task="naive", error=0.25, error_rms=0.5, **common),
        ReportRow(name="CONV3D-Grey-TMP", task="length", error=0.5, error_rms=math.sqrt(0.5), error_normalized=0.3,
                  stride=2, seeds=[0, 1], per_seed=[0.4, 0.6], **common),
    ]
    matrix = confusion([1, 2, 2, 3], [1, 2, 3, 3])
    return BenchmarkReport(rows=rows, confusions={"CONV3D-Depth-MV": matrix},
                           settings={"base_seed": 7, "train": {"epochs": 1}})


def test_format_value():
    assert format_value(None) == ""
    assert format_value(0.123456) == "0.1235"
    assert format_value(8) == "8"
    assert format_value([0, 1]) == "0;1"
    assert format_value([0.4, 0.6]) == "0.4000;0.6000"
    assert format_value([]) == ""


def test_csv_report(tmp_path, report):
    path = CsvReportGenerator(tmp_path).generate(report, "t0")
    with open(path, newline="", encoding="utf-8") as f:
        rows = list(csv.DictReader(f))
    assert len(rows) == 3
    assert rows[0]["accuracy"] == "0.9500" and rows[0]["error"] == ""
    assert rows[0]["stride"] == "1" and rows[0]["error_normalized"] == ""
    assert rows[2]["error_normalized"] == "0.3000"
    assert rows[2]["seeds"] == "0;1" and rows[2]["per_seed"] == "0.4000;0.6000"
    assert rows[2]["stride"] == "2"
    assert rows[1]["error"] == "0.2500" and rows[1]["accuracy"] == ""
    assert rows[0]["views"] == "8"


def test_text_report_is_aligned(report):
    lines = TextReportGenerator.render(report).splitlines()
    assert len(lines) == 5
    assert lines[0].startswith("Architecture")
    assert set(lines[1].replace(" ", "")) == {"-"}
    column = lines[0].index("Task")
    assert lines[2][column:].startswith("count")
    assert lines[3][column:].startswith("naive")
    assert lines[4][column:].startswith("length")
    assert lines[0].rstrip().endswith("Per seed")


def test_markdown_report(tmp_path, report):
    path = MarkdownReportGenerator(tmp_path).generate(report, "t0")
    content = open(path, encoding="utf-8").read()
    assert "| CONV3D-Depth-MV | count |" in content
    assert "### CONV3D-Depth-MV" in content
    assert "| 3 | 0 | 1 | 1 | 0 | 0 | 0 |" in content
    assert "epochs=1" in content


def test_word_report(tmp_path, report):
    docx = pytest.importorskip("docx")
    path = ReportGeneratorFactory.generate_report(report, "word", tmp_path, "t0")
    doc = docx.Document(path)
    assert doc.tables[0].rows[1].cells[0].text == "CONV3D-Depth-MV"
    assert len(doc.tables) == 2


def test_confusion_exports(tmp_path, report):
    paths = export_confusions(report, tmp_path)
    assert [p.rsplit("/", 1)[-1] for p in paths] == ["confusion_CONV3D-Depth-MV.csv",
                                                     "confusion_CONV3D-Depth-MV.pgm"]
    assert (tmp_path / "confusion_CONV3D-Depth-MV.pgm").read_bytes().startswith(b"P5\n96 96\n255\n")


def test_generate_all_and_unknown_format(tmp_path, report):
    paths = ReportGeneratorFactory.generate_all(report, ["csv", "markdown"], tmp_path)
    assert set(paths) == {"csv", "markdown"}
    assert (tmp_path / "confusion_CONV3D-Depth-MV.csv").exists()
    with pytest.raises(InvalidArgumentError):
        ReportGeneratorFactory.create_generator("pdf", tmp_path)
    with pytest.raises(InvalidArgumentError):
        ReportGeneratorFactory.generate_all(report, ["csv", "xlsx"], tmp_path / "other")
    assert not list((tmp_path / "other").glob("report_*"))
