"""
试验执行器
执行目标函数并记录耗时与异常，支持线程池批量评估
"""

import math
import time
import traceback
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Optional, Sequence

from rich.console import Console

console = Console(stderr=True)

Objective = Callable[[Dict[str, Any]], float]


@dataclass
class ExecutionResult:
    """单次执行结果"""

    index: int
    assignment: Dict[str, Any]
    value: Optional[float] = None
    error: Optional[str] = None
    execution_time: float = 0.0

    @property
    def success(self) -> bool:
        return self.error is None


class TrialExecutor:
    """目标函数执行器，捕获异常而不是中断搜索"""

    def __init__(self, width: int = 1, verbose: bool = False):
        self.width = max(1, int(width))
        self.verbose = verbose

    def execute(self, objective: Objective, assignment: Dict[str, Any], index: int = 0) -> ExecutionResult:
        """
        执行一次目标函数

        Args:
            objective: 配置 -> 目标值
            assignment: 超参数配置
            index: 提案序号

        Returns:
            ExecutionResult: 目标值或错误信息，以及耗时
        """
        result = ExecutionResult(index=index, assignment=dict(assignment))
        start = time.perf_counter()
        try:
            value = float(objective(dict(assignment)))
            if not math.isfinite(value):
                raise ValueError(f"目标值非有限: {value}")
            result.value = value
        except Exception as e:
            result.error = f"{type(e).__name__}: {e}"
            console.print(f"❌ 试验 #{index} 失败: {result.error}", style="red")
            if self.verbose:
                console.print(traceback.format_exc(), style="dim red")
        finally:
            result.execution_time = time.perf_counter() - start
        return result

    def run_batch(self, objective: Objective, assignments: Sequence[Dict[str, Any]],
                  start_index: int = 0) -> List[ExecutionResult]:
        """并发评估一批配置，结果按提案顺序返回"""
        indices = range(start_index, start_index + len(assignments))
        if self.width == 1 or len(assignments) <= 1:
            return [self.execute(objective, a, i) for a, i in zip(assignments, indices)]
        with ThreadPoolExecutor(max_workers=self.width) as pool:
            futures = [pool.submit(self.execute, objective, a, i) for a, i in zip(assignments, indices)]
            results = [f.result() for f in futures]
        return sorted(results, key=lambda r: r.index)
