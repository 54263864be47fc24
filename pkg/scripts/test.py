#!/usr/bin/env python3
"""
运行项目测试
"""

import subprocess
import sys
from pathlib import Path


def run_tests(extra_args=None) -> bool:
    """运行所有单元测试"""
    print("🧪 运行项目测试...")

    try:
        import pytest  # noqa: F401
    except ImportError:
        print("❌ pytest 未安装，请先执行: pip install -r requirements.txt")
        return False

    if not list(Path("tests").glob("test_*.py")):
        print("⚠️  未找到测试文件")
        return False

    result = subprocess.run([sys.executable, "-m", "pytest", "tests/", "-v"] + list(extra_args or []))
    if result.returncode == 0:
        print("✅ 所有测试通过")
        return True
    print("❌ 测试失败")
    return False


if __name__ == "__main__":
    sys.exit(0 if run_tests(sys.argv[1:]) else 1)
