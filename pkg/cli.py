"""
命令行入口
generate / train / eval / inspect 四个命令

参数优先级：显式命令行参数 > --config 文件 > 默认值。--config 可以是 KEY=VALUE
格式的 dotenv 文件，也可以是命令打印出的有效配置 JSON。
"""
import argparse
import json
import logging
import sys
import time
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

from dotenv import dotenv_values
from pydantic import ValidationError

from benchmark import BenchmarkSpec, run_benchmark
from config import Config, GenerationParams, RunConfig, setup_logging
from dataset import StackDataset, frame, generate_dataset, load_instance
from errors import InvalidArgumentError, LinkBenchError
from manifest import DatasetManifest
from models import build_counter_cnn_lstm, build_counter_conv3d, build_end_to_end, build_length_regressor
from renderer import depth_to_u8, gray_to_u8, write_pgm
from report_generator import ReportGeneratorFactory, TextReportGenerator
from trainer import align_depth_scale, train

logger = logging.getLogger(__name__)

COMMANDS = ("generate", "train", "eval", "inspect")


def parse_resolution(text: str):
    """'128x96' -> (128, 96)"""
    try:
        w, h = (int(v) for v in str(text).lower().split("x"))
    except ValueError:
        raise InvalidArgumentError(f"--res 格式应为 WxH: {text}") from None
    if w < 1 or h < 1:
        raise InvalidArgumentError(f"--res 必须为正: {text}")
    return w, h


def parse_list(text) -> List[str]:
    if isinstance(text, (list, tuple)):
        return [str(v) for v in text]
    return [v.strip() for v in str(text).split(",") if v.strip()]


def parse_seeds(text) -> List[int]:
    try:
        values = [int(v) for v in parse_list(text)]
    except ValueError:
        raise InvalidArgumentError(f"--seeds 格式应为逗号分隔的整数: {text}") from None
    if not values:
        raise InvalidArgumentError("--seeds 不能为空")
    return values


def parse_fractions(text) -> List[float]:
    try:
        values = [float(v) for v in parse_list(text)]
    except ValueError:
        raise InvalidArgumentError(f"--split 格式应为 train,val,test: {text}") from None
    if len(values) != 3:
        raise InvalidArgumentError(f"--split 需要 3 个比例: {text}")
    return values


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="dotenv 格式 (KEY=VALUE) 或有效配置 JSON 文件")
    common.add_argument("--data", help="数据集目录，默认取环境变量 LINKBENCH_DATA_ROOT")
    common.add_argument("--out", help="输出目录")
    common.add_argument("--seed", type=int)
    common.add_argument("--jobs", type=int)
    common.add_argument("--log-level", default=None)
    determinism = common.add_mutually_exclusive_group()
    determinism.add_argument("--deterministic", dest="deterministic", action="store_const", const=True)
    determinism.add_argument("--no-deterministic", dest="deterministic", action="store_const", const=False)

    parser = argparse.ArgumentParser(prog=Config.APP_NAME, description="运动链连杆计数与长度估计基准")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", parents=[common], help="生成数据集")
    gen.add_argument("--per-n", type=int, dest="per_n")
    gen.add_argument("--frames", type=int)
    gen.add_argument("--rig", type=int, help="相机数量")
    gen.add_argument("--res", help="分辨率 WxH，例如 128x96")
    gen.add_argument("--split", help="划分比例 train,val,test")
    gen.add_argument("--ground-plane", dest="ground_plane", action="store_const", const=True)
    gen.add_argument("--desk", action="store_const", const=True,
                     help="桌面规模分辨率 64x48（--config 文件和 --res 优先）")

    for name, help_text in (("train", "训练一个架构"), ("eval", "训练并评估，输出报告")):
        p = sub.add_parser(name, parents=[common], help=help_text)
        p.add_argument("--arch", help="架构名，例如 CONV3D-Depth-MV（eval 可用逗号分隔多个）")
        p.add_argument("--task", help="count / length / naive / end-to-end（eval 可用逗号分隔多个）")
        p.add_argument("--epochs", type=int)
        p.add_argument("--batch-size", type=int, dest="batch_size")
        p.add_argument("--lr", type=float)
        p.add_argument("--optimizer", choices=["adam", "sgd"])
        p.add_argument("--stride", type=int, help="时间步采样间隔，默认 1 即使用全部时间步")
        if name == "train":
            p.add_argument("--n", type=int, help="length 任务只训练该 n 的回归网络")
        else:
            p.add_argument("--format", help="报告格式 csv,text,markdown,word")
            p.add_argument("--report", action="store_true", help="写出报告文件（默认即写出）")
            p.add_argument("--seeds", help="逗号分隔的训练种子，每个种子训练一次后取平均")

    ins = sub.add_parser("inspect", parents=[common], help="导出单个实例的图像与真值")
    ins.add_argument("--id", dest="id")
    ins.add_argument("--t", type=int, dest="t")
    return parser


def _read_config_file(path: str):
    """
    读取 --config 文件

    Returns:
        (基础配置字典或 None, 扁平设置字典)
    """
    file = Path(path)
    if not file.exists():
        raise InvalidArgumentError(f"--config 文件不存在: {path}")
    text = file.read_text(encoding="utf-8").strip()
    if text.startswith("{"):
        try:
            return json.loads(text), {}
        except json.JSONDecodeError as e:
            raise InvalidArgumentError(f"--config JSON 解析失败: {path}: {e}") from e
    values = dotenv_values(file)
    return None, {k.strip().lower().replace("-", "_"): v for k, v in values.items() if v is not None}


def _apply(base: Dict[str, Any], settings: Dict[str, Any]) -> Dict[str, Any]:
    """把扁平设置合并进 RunConfig 字典"""
    gen = dict(base.get("generation", {}))
    trn = dict(base.get("train", {}))
    for key, value in settings.items():
        if value is None:
            continue
        if key == "data":
            base["data_dir"] = value
        elif key == "out":
            base["out_dir"] = value
        elif key == "seed":
            base["seed"] = value
            trn["seed"] = value
        elif key in ("jobs", "per_n", "deterministic"):
            base[key] = value
            if key == "deterministic":
                trn["deterministic"] = value
        elif key == "split":
            base["fractions"] = parse_fractions(value)
        elif key == "frames":
            gen["frames"] = value
        elif key == "rig":
            gen["rig_size"] = value
        elif key == "res":
            gen["img_w"], gen["img_h"] = parse_resolution(value)
        elif key == "ground_plane":
            gen["ground_plane"] = value
        elif key in ("epochs", "batch_size", "lr", "optimizer"):
            trn[key] = value
        elif key == "stride":
            trn["timestep_stride"] = value
        elif key == "arch":
            base["archs"] = parse_list(value)
        elif key == "task":
            base["tasks"] = parse_list(value)
        elif key == "format":
            base["formats"] = parse_list(value)
        elif key == "seeds":
            base["seeds"] = parse_seeds(value)
        elif key == "n":
            base["n"] = value
        elif key == "id":
            base["instance_id"] = value
        elif key == "t":
            base["timestep"] = value
        else:
            raise InvalidArgumentError(f"未知配置项: {key}")
    base["generation"] = gen
    base["train"] = trn
    return base


FLAG_KEYS = ("data", "out", "seed", "jobs", "deterministic", "per_n", "frames", "rig", "res", "split",
             "ground_plane", "arch", "task", "epochs", "batch_size", "lr", "optimizer", "stride", "n",
             "format", "id", "t", "seeds")


def _is_true(value) -> bool:
    if isinstance(value, str):
        return value.strip().lower() in ("1", "true", "yes", "on")
    return bool(value)


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """
    合并默认值、--config 文件和命令行参数，所有字段都具体化

    Raises:
        InvalidArgumentError: 参数不合法或互相矛盾
    """
    base: Dict[str, Any] = {}
    file_settings: Dict[str, Any] = {}
    if args.config:
        loaded, file_settings = _read_config_file(args.config)
        if loaded is not None:
            base = loaded
    base["command"] = args.command
    # --desk 只是预设，放在配置文件之下
    desk = bool(getattr(args, "desk", None)) or _is_true(file_settings.pop("desk", None))
    preset = GenerationParams.desk()
    if desk:
        base["generation"] = {"img_w": preset.img_w, "img_h": preset.img_h, **base.get("generation", {})}
    flags = {k: getattr(args, k, None) for k in FLAG_KEYS}
    try:
        merged = _apply(_apply(base, file_settings), flags)
        gen = merged["generation"]
        resolution = (gen.get("img_w", preset.img_w), gen.get("img_h", preset.img_h))
        if desk and flags["res"] is None and resolution != (preset.img_w, preset.img_h):
            logger.warning(f"--config 中的分辨率 {resolution[0]}x{resolution[1]} 覆盖了 --desk 预设 "
                           f"{preset.img_w}x{preset.img_h}")
        return RunConfig(**merged)
    except ValidationError as e:
        raise InvalidArgumentError(f"配置不合法: {e}") from e


# ---------------------------------------------------------------------------
# 命令
# ---------------------------------------------------------------------------

def cmd_generate(cfg: RunConfig) -> DatasetManifest:
    """生成数据集并打印摘要"""
    root = Path(cfg.data_dir)
    try:
        root.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise OSError(f"无法创建数据集目录 {root}: {e}") from e
    start = time.time()
    manifest = generate_dataset(root, cfg.per_n, cfg.generation, cfg.seed, cfg.jobs, cfg.fractions)
    stats = manifest.get_statistics()
    print(f"生成完成: {stats['total']} 个实例 -> {root}")
    print(f"  每个 n: {stats['per_n']}")
    print(f"  划分: {stats['per_split']}")
    print(f"  磁盘占用: {stats['bytes']} 字节")
    print(f"  用时: {time.time() - start:.1f}s")
    return manifest


def _load_manifest(cfg: RunConfig) -> DatasetManifest:
    root = Path(cfg.data_dir)
    if not (root / "manifest.json").exists():
        raise InvalidArgumentError(f"--data 目录中没有 manifest.json: {root}")
    return DatasetManifest.load(root)


def _train_and_save(cfg: RunConfig, manifest: DatasetManifest, name: str, build, mode: str, modality: str,
                    label_kind: str, only_n: Optional[int] = None) -> Path:
    root = Path(cfg.data_dir)
    stride = cfg.train.timestep_stride
    data = StackDataset(root, manifest, "train", mode, modality, label_kind, stride, only_n)
    if len(data) == 0:
        raise InvalidArgumentError(f"训练划分中没有 {name} 可用的样本")
    val = None
    if manifest.split_entries("val"):
        val = StackDataset(root, manifest, "val", mode, modality, label_kind, stride, only_n)
    model = build(data.inputs.shape[1:])
    result = train(model, data, align_depth_scale(cfg.train, manifest.params.get("far")), val)
    out = Path(cfg.out_dir)
    path = model.save(out / f"{name}.knn", seed=cfg.train.seed, epoch=cfg.train.epochs)
    result.history.to_csv(out / f"{name}_history.csv")
    print(f"{name}: 参数 {model.param_count()}，最终损失 "
          f"{result.history.losses[-1] if result.history.losses else float('nan'):.6f} -> {path}")
    return path


def cmd_train(cfg: RunConfig) -> List[Path]:
    """训练一个架构，写出检查点和训练历史"""
    if len(cfg.archs) != 1 or len(cfg.tasks) != 1:
        raise InvalidArgumentError("train 一次只接受一个 --arch 和一个 --task")
    spec = BenchmarkSpec.parse(cfg.archs[0], cfg.tasks[0])
    arch, task = spec.arch, spec.task
    manifest = _load_manifest(cfg)
    seed = cfg.train.seed
    Path(cfg.out_dir).mkdir(parents=True, exist_ok=True)

    def counter(shape):
        if arch.arch == "cnn_lstm":
            return build_counter_cnn_lstm(shape[1:], shape[0], arch.mode, arch.modality, seed)
        return build_counter_conv3d(shape, arch.mode, arch.modality, seed)

    paths = []
    if task in ("count", "naive"):
        paths.append(_train_and_save(cfg, manifest, f"{arch.name}_count", counter,
                                     arch.mode, arch.modality, "count"))
    if task in ("length", "naive"):
        ns = [cfg.n] if cfg.n is not None else range(1, 7)
        for n in ns:
            paths.append(_train_and_save(
                cfg, manifest, f"{arch.name}_length_n{n}",
                lambda shape, n=n: build_length_regressor(n, shape, arch.mode, arch.modality, seed),
                arch.mode, arch.modality, "lengths", only_n=n))
    if task == "end-to-end":
        paths.append(_train_and_save(
            cfg, manifest, f"{arch.name}_end-to-end",
            lambda shape: build_end_to_end(shape, arch.mode, arch.modality, seed),
            arch.mode, arch.modality, "padded"))
    return paths


def cmd_eval(cfg: RunConfig):
    """按 --arch x --task 评测并输出报告文件"""
    specs = [BenchmarkSpec.parse(a, t) for a in cfg.archs for t in cfg.tasks]
    ReportGeneratorFactory.check_formats(cfg.formats)
    manifest = _load_manifest(cfg)
    report = run_benchmark(Path(cfg.data_dir), manifest, specs, cfg.train, seeds=cfg.seeds)
    paths = ReportGeneratorFactory.generate_all(report, cfg.formats, Path(cfg.out_dir))
    print(TextReportGenerator.render(report), end="")
    for fmt, path in paths.items():
        print(f"{fmt} 报告: {path}")
    return report


def cmd_inspect(cfg: RunConfig) -> Path:
    """导出某个实例在时间步 t 的全部相机深度/灰度 PGM，并打印真值"""
    manifest = _load_manifest(cfg)
    entry = manifest.get_entry(cfg.instance_id)
    if entry is None:
        raise InvalidArgumentError(f"清单中没有实例: {cfg.instance_id}")
    inst = load_instance(entry, Path(cfg.data_dir))
    if cfg.timestep >= inst.num_timesteps:
        raise InvalidArgumentError(f"--t {cfg.timestep} 超出范围 [0, {inst.num_timesteps})")

    out = Path(cfg.out_dir) / f"inspect_{entry.id}_t{cfg.timestep}"
    params = inst.params
    for c in range(inst.num_cameras):
        view = frame(inst, c, cfg.timestep)
        write_pgm(out / f"cam{c}_depth.pgm", depth_to_u8(view.depth, params.near, params.far))
        write_pgm(out / f"cam{c}_gray.pgm", gray_to_u8(view.gray))

    lengths = list(inst.config.lengths)
    if any(abs(a - b) > 1e-12 for a, b in zip(lengths, entry.lengths)):
        logger.warning(f"实例文件中的长度与清单不一致: {entry.id}")
    poses = frame(inst, 0, cfg.timestep).poses
    print(f"实例 {entry.id}: n={inst.config.n}, split={entry.split}, seed={entry.seed}")
    print(f"  长度: {', '.join(f'{v:.6f}' for v in lengths)}")
    print(f"  颜色: {', '.join(inst.config.colors)}")
    print(f"  关节角 (t={cfg.timestep}): {', '.join(f'{a:.6f}' for a in inst.trajectory.angles[cfg.timestep])}")
    print(f"  末端位置: {poses.endpoints[-1].round(6).tolist()}")
    print(f"  已写出 {2 * inst.num_cameras} 张 PGM -> {out}")
    return out


HANDLERS = {"generate": cmd_generate, "train": cmd_train, "eval": cmd_eval, "inspect": cmd_inspect}


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    命令行主函数

    Returns:
        退出码：0 成功，1 失败
    """
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        setup_logging(args.log_level)
        cfg = resolve_config(args)
        print(f"effective config: {cfg.effective_line()}")
        HANDLERS[cfg.command](cfg)
        return 0
    except (LinkBenchError, ValidationError, OSError, ImportError) as e:
        logger.error(f"{args.command} 失败: {e}")
        print(f"错误 ({args.command}): {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
