#!/usr/bin/env python3
"""
项目设置脚本
"""

import subprocess
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from src.utils.config import Config  # noqa: E402


def run_command(cmd, description):
    """运行命令并显示结果"""
    print(f"🔧 {description}...")
    try:
        subprocess.run(cmd, check=True)
        print(f"✅ {description} 完成")
        return True
    except subprocess.CalledProcessError as e:
        print(f"❌ {description} 失败: {e}")
        return False


def setup_environment():
    """设置开发环境"""
    print("🚀 开始设置多层混合入侵检测系统...")

    if not run_command([sys.executable, "-m", "pip", "install", "-r", "requirements.txt"], "安装Python依赖"):
        return False

    env_file = Path(".env")
    if not env_file.exists():
        env_file.write_text(
            "# 默认流水线配置文件（section.key=value 格式）\n"
            "# IDS_CONFIG=configs/pipeline.cfg\n"
            "IDS_SEED=0\n"
            "IDS_THREADS=1\n"
            "IDS_OUTPUT_DIR=runs\n",
            encoding="utf-8",
        )
        print("✅ 已创建 .env 配置文件")
    else:
        print("ℹ️  .env 配置文件已存在")

    output = Config.ensure_directories()
    print(f"✅ 已创建输出目录: {output}")

    print("\n🎉 环境设置完成！")
    print("\n📋 下一步:")
    print("1. 运行 python scripts/demo.py 体验完整流程")
    print("2. 运行 python main.py --help 查看可用命令")
    return True


if __name__ == "__main__":
    sys.exit(0 if setup_environment() else 1)
