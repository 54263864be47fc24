#!/usr/bin/env python3
"""
多层混合入侵检测系统
主入口文件 - 命令行界面
"""

import sys

import click
from rich.console import Console

from src.cli.interface import cli
from src.utils.errors import IdsError

console = Console(stderr=True)


def main(argv=None) -> int:
    """主函数：把异常映射为退出码（1 用法/配置, 2 数据, 3 内部不变量）"""
    try:
        cli.main(args=argv, prog_name='mthids', standalone_mode=False)
    except click.exceptions.Exit as e:
        return e.exit_code
    except click.ClickException as e:
        e.show()
        return 1
    except click.Abort:
        console.print("❌ 已中止", style="red")
        return 1
    except IdsError as e:
        console.print(f"❌ {e}", style="bold red")
        return e.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
