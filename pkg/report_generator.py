"""
报告生成模块
把评测结果导出为 CSV、对齐文本表、Markdown 和 Word 格式，并导出混淆矩阵
"""
import csv
import logging
from datetime import datetime
from pathlib import Path
from typing import Dict, List, Optional

from jinja2 import Template

try:
    from docx import Document
    from docx.enum.text import WD_PARAGRAPH_ALIGNMENT
    from docx.shared import Pt
except ImportError:
    Document = None

from benchmark import BenchmarkReport, ReportRow
from config import Config
from errors import InvalidArgumentError
from renderer import write_pgm

logger = logging.getLogger(__name__)

COLUMNS = [
    ("name", "Architecture"),
    ("task", "Task"),
    ("grey", "Grey"),
    ("depth", "Depth"),
    ("temporal", "Temporal"),
    ("views", "Views"),
    ("total", "Total"),
    ("train_instances", "Train inst"),
    ("test_instances", "Test inst"),
    ("train_stacks", "Train stacks"),
    ("test_stacks", "Test stacks"),
    ("accuracy", "Accuracy"),
    ("error", "Error E_L"),
    ("error_rms", "sqrt(E_L)"),
    ("error_normalized", "E_L / base"),
    ("reference", "Reference"),
    ("stride", "Stride"),
    ("seeds", "Seeds"),
    ("per_seed", "Per seed"),
]

MARKDOWN_TEMPLATE = Template("""# 评测报告

- 生成时间: {{ created }}
- 数据集基础种子: {{ settings.get('base_seed', '-') }}
{% if settings.get('train') %}- 训练参数: {% for k, v in settings['train'].items() %}{{ k }}={{ v }}{% if not loop.last %}, {% endif %}{% endfor %}
{% endif %}

## 结果

| {{ headers | join(' | ') }} |
|{% for _ in headers %} --- |{% endfor %}
{% for row in rows %}| {{ row | join(' | ') }} |
{% endfor %}
{% if confusions %}
## 混淆矩阵（行: 真实 n，列: 预测 n）
{% for name, counts in confusions.items() %}
### {{ name }}

| n | 1 | 2 | 3 | 4 | 5 | 6 |
| --- | --- | --- | --- | --- | --- | --- |
{% for row in counts %}| {{ loop.index }} | {{ row | join(' | ') }} |
{% endfor %}{% endfor %}{% endif %}
""")


def format_value(value) -> str:
    """数值格式化：None 为空，浮点保留 4 位，列表以分号连接"""
    if value is None:
        return ""
    if isinstance(value, (list, tuple)):
        return ";".join(format_value(v) for v in value)
    if isinstance(value, float):
        return f"{value:.4f}"
    return str(value)


def table_rows(rows: List[ReportRow]) -> List[List[str]]:
    return [[format_value(getattr(row, key)) for key, _ in COLUMNS] for row in rows]


class ReportGenerator:
    """报告生成器基类"""

    suffix = ""

    def __init__(self, output_dir: Optional[Path] = None):
        self.output_dir = Path(output_dir or Config.OUTPUT_DIR)
        self.output_dir.mkdir(parents=True, exist_ok=True)

    def path_for(self, timestamp: str) -> Path:
        return self.output_dir / f"report_{timestamp}{self.suffix}"

    def generate(self, report: BenchmarkReport, timestamp: str) -> str:
        """
        生成报告

        Args:
            report: 评测报告
            timestamp: 文件名中的时间戳

        Returns:
            生成的文件路径
        """
        raise NotImplementedError


class CsvReportGenerator(ReportGenerator):
    """CSV 报告，每个评测一行"""

    suffix = ".csv"

    def generate(self, report: BenchmarkReport, timestamp: str) -> str:
        filepath = self.path_for(timestamp)
        with open(filepath, 'w', newline='', encoding='utf-8') as f:
            writer = csv.writer(f)
            writer.writerow([key for key, _ in COLUMNS])
            writer.writerows(table_rows(report.rows))
        logger.info(f"CSV报告生成成功: {filepath}")
        return str(filepath)


class TextReportGenerator(ReportGenerator):
    """对齐的纯文本表"""

    suffix = ".txt"

    @staticmethod
    def render(report: BenchmarkReport) -> str:
        headers = [title for _, title in COLUMNS]
        rows = [[v or "-" for v in row] for row in table_rows(report.rows)]
        widths = [max(len(h), *(len(r[i]) for r in rows)) if rows else len(h) for i, h in enumerate(headers)]
        lines = ["  ".join(h.ljust(w) for h, w in zip(headers, widths))]
        lines.append("  ".join("-" * w for w in widths))
        for row in rows:
            lines.append("  ".join(v.ljust(w) for v, w in zip(row, widths)))
        return "\n".join(line.rstrip() for line in lines) + "\n"

    def generate(self, report: BenchmarkReport, timestamp: str) -> str:
        filepath = self.path_for(timestamp)
        filepath.write_text(self.render(report), encoding='utf-8')
        logger.info(f"文本报告生成成功: {filepath}")
        return str(filepath)


class MarkdownReportGenerator(ReportGenerator):
    """Markdown 报告（jinja2 模板）"""

    suffix = ".md"

    def generate(self, report: BenchmarkReport, timestamp: str) -> str:
        try:
            content = MARKDOWN_TEMPLATE.render(
                created=report.created,
                settings=report.settings,
                headers=[title for _, title in COLUMNS],
                rows=table_rows(report.rows),
                confusions={name: m.counts.tolist() for name, m in report.confusions.items()},
            )
            filepath = self.path_for(timestamp)
            filepath.write_text(content, encoding='utf-8')
            logger.info(f"Markdown报告生成成功: {filepath}")
            return str(filepath)
        except Exception as e:
            logger.error(f"生成Markdown报告失败: {e}")
            raise


class WordReportGenerator(ReportGenerator):
    """Word 报告"""

    suffix = ".docx"

    def __init__(self, output_dir: Optional[Path] = None):
        super().__init__(output_dir)
        if Document is None:
            raise ImportError("python-docx 未安装")

    def generate(self, report: BenchmarkReport, timestamp: str) -> str:
        try:
            doc = Document()
            title = doc.add_heading('评测报告', 0)
            title.alignment = WD_PARAGRAPH_ALIGNMENT.CENTER
            doc.add_paragraph(f"生成时间: {report.created}")

            doc.add_heading('一、结果', level=1)
            table = doc.add_table(rows=1, cols=len(COLUMNS))
            table.style = 'Table Grid'
            for i, (_, header) in enumerate(COLUMNS):
                table.rows[0].cells[i].text = header
            for values in table_rows(report.rows):
                cells = table.add_row().cells
                for i, value in enumerate(values):
                    cells[i].text = value

            if report.confusions:
                doc.add_heading('二、混淆矩阵', level=1)
                for name, matrix in report.confusions.items():
                    doc.add_heading(name, level=2)
                    grid = doc.add_table(rows=matrix.counts.shape[0] + 1, cols=matrix.counts.shape[1] + 1)
                    grid.style = 'Table Grid'
                    grid.rows[0].cells[0].text = "n"
                    for k in range(matrix.counts.shape[1]):
                        grid.rows[0].cells[k + 1].text = str(k + 1)
                    for r, row in enumerate(matrix.counts):
                        grid.rows[r + 1].cells[0].text = str(r + 1)
                        for c, value in enumerate(row):
                            grid.rows[r + 1].cells[c + 1].text = str(int(value))

            note = doc.add_paragraph("Error 为补零长度向量的平方误差和 E_L 的平均值，sqrt(E_L) 为其平方根。")
            note.runs[0].font.size = Pt(9)

            filepath = self.path_for(timestamp)
            doc.save(str(filepath))
            logger.info(f"Word报告生成成功: {filepath}")
            return str(filepath)
        except Exception as e:
            logger.error(f"生成Word报告失败: {e}")
            raise


def export_confusions(report: BenchmarkReport, output_dir: Path) -> List[str]:
    """
    导出每个计数架构的混淆矩阵：confusion_<arch>.csv 与行归一化热力图 confusion_<arch>.pgm
    """
    output_dir = Path(output_dir)
    paths = []
    for name, matrix in report.confusions.items():
        paths.append(str(matrix.to_csv(output_dir / f"confusion_{name}.csv")))
        pgm = output_dir / f"confusion_{name}.pgm"
        write_pgm(pgm, matrix.heatmap())
        paths.append(str(pgm))
    return paths


class ReportGeneratorFactory:
    """报告生成器工厂类"""

    _generators = {
        "csv": CsvReportGenerator,
        "text": TextReportGenerator,
        "txt": TextReportGenerator,
        "markdown": MarkdownReportGenerator,
        "md": MarkdownReportGenerator,
        "word": WordReportGenerator,
        "docx": WordReportGenerator,
    }

    @staticmethod
    def check_formats(formats):
        """检查格式名，不创建任何目录"""
        for fmt in formats:
            if fmt.lower() not in ReportGeneratorFactory._generators:
                raise InvalidArgumentError(f"不支持的输出格式: {fmt}")

    @staticmethod
    def create_generator(output_format: str, output_dir: Optional[Path] = None) -> ReportGenerator:
        """
        创建报告生成器

        Args:
            output_format: 输出格式 (csv, text, markdown, word)
        """
        cls = ReportGeneratorFactory._generators.get(output_format.lower())
        if cls is None:
            raise InvalidArgumentError(f"不支持的输出格式: {output_format}")
        return cls(output_dir)

    @staticmethod
    def generate_report(report: BenchmarkReport, output_format: str = "csv",
                        output_dir: Optional[Path] = None, timestamp: Optional[str] = None) -> str:
        """生成单一格式的报告（统一接口）"""
        timestamp = timestamp or datetime.now().strftime("%Y%m%d_%H%M%S")
        generator = ReportGeneratorFactory.create_generator(output_format, output_dir)
        return generator.generate(report, timestamp)

    @staticmethod
    def generate_all(report: BenchmarkReport, formats, output_dir: Optional[Path] = None) -> Dict[str, str]:
        """
        按多个格式导出，并导出混淆矩阵

        Returns:
            {格式: 文件路径}
        """
        ReportGeneratorFactory.check_formats(formats)
        timestamp = datetime.now().strftime("%Y%m%d_%H%M%S")
        paths = {fmt: ReportGeneratorFactory.generate_report(report, fmt, output_dir, timestamp)
                 for fmt in formats}
        export_confusions(report, output_dir or Config.OUTPUT_DIR)
        return paths
