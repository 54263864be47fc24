"""
异常定义模块
所有库函数抛出的异常类型，附带命令行退出码
"""


class IdsError(Exception):
    """检测系统异常基类"""

    exit_code: int = 3


class ConfigError(IdsError, ValueError):
    """配置或用法错误"""

    exit_code = 1


class DataError(IdsError, ValueError):
    """输入数据错误：格式、宽度或类别不满足前置条件"""

    exit_code = 2


class InvariantError(IdsError, AssertionError):
    """内部不变量被破坏"""

    exit_code = 3


def check_width(X, expected: int, what: str = "输入") -> None:
    """校验特征宽度，不匹配时抛出 DataError"""
    width = X.shape[-1]
    if width != expected:
        raise DataError(f"{what}特征宽度不匹配: 期望 {expected}, 实际 {width}")
