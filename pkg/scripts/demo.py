#!/usr/bin/env python3
"""
运行演示示例
在合成 CAN 数据上走完 导入 -> 训练 -> 零日评估 -> 延迟基准
"""

import subprocess
import sys
from datetime import datetime
from pathlib import Path


def run_step(args, description) -> bool:
    print(f"\n🔧 {description}...")
    result = subprocess.run([sys.executable, "main.py"] + args)
    if result.returncode != 0:
        print(f"❌ {description}失败 (退出码 {result.returncode})")
        return False
    print(f"✅ {description}完成")
    return True


def run_demo(frames: int = 5000) -> bool:
    """运行完整的演示流程"""
    print("🎬 多层混合入侵检测系统 - 演示模式")
    print("=" * 50)

    run_dir = Path("runs") / f"demo_{datetime.now().strftime('%Y%m%d_%H%M%S')}"
    raw = run_dir / "can"
    data = run_dir / "can.csv"
    model = run_dir / "ids.bin"

    print("📋 演示流程:")
    print("1. 生成合成 CAN 注入日志")
    print("2. 导入为规范 CSV")
    print("3. 训练并留出评估")
    print("4. 零日评估（依次留出每个攻击类）")
    print("5. 单条检测延迟基准")

    if not run_step(["synth", "--kind", "can", "--out", str(raw), "--frames", str(frames)], "生成合成数据"):
        return False
    logs = sorted(str(p) for p in raw.glob("*.csv"))
    if not run_step(["ingest", *logs, "--format", "can", "--out", str(data)], "导入数据"):
        return False
    if not run_step(["train", str(data), "--model", str(model), "--report", str(run_dir / "holdout.csv")], "训练"):
        return False
    if not run_step(["zeroDay", str(data), "--report", str(run_dir / "zeroday.csv")], "零日评估"):
        return False
    if not run_step(["bench", str(model), str(data), "--report", str(run_dir / "bench.csv")], "延迟基准"):
        return False

    print(f"\n🎉 演示完成，结果保存在 {run_dir}")
    return True


if __name__ == "__main__":
    sys.exit(0 if run_demo() else 1)
