#!/usr/bin/env python3
"""
linkbench - 启动脚本
检查依赖和目录后转交给命令行入口
"""
import sys
import logging
from pathlib import Path

# 添加项目根目录到路径
project_root = Path(__file__).parent
sys.path.insert(0, str(project_root))


# 检查依赖
def check_dependencies():
    """检查必要的依赖是否安装"""
    missing = []
    for module, package in (("numpy", "numpy"), ("numba", "numba"), ("dotenv", "python-dotenv"),
                            ("pydantic", "pydantic"), ("jinja2", "jinja2")):
        try:
            __import__(module)
        except ImportError:
            missing.append(package)

    if missing:
        print("❌ 缺少必要的依赖包:", file=sys.stderr)
        for pkg in missing:
            print(f"   - {pkg}", file=sys.stderr)
        print("\n请运行以下命令安装:", file=sys.stderr)
        print("pip install -r requirements.txt", file=sys.stderr)
        return False

    try:
        import docx  # noqa: F401
    except ImportError:
        print("⚠️  python-docx 未安装，word 格式报告不可用", file=sys.stderr)
    return True


def check_config():
    """初始化输出与缓存目录"""
    from config import Config

    try:
        Config.init_directories()
    except OSError as e:
        print(f"❌ 目录初始化失败: {e}", file=sys.stderr)
        return False
    return True


def main(argv=None) -> int:
    """主函数"""
    if not check_dependencies() or not check_config():
        return 1

    from cli import main as cli_main

    try:
        return cli_main(argv)
    except Exception as e:
        print(f"❌ 运行失败: {e}", file=sys.stderr)
        logging.exception("运行异常")
        return 1


if __name__ == "__main__":
    sys.exit(main())
