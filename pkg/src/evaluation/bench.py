"""
检测延迟基准
逐行计时各检测阶段并统计模型序列化大小
"""

import time
from dataclasses import dataclass
from typing import Dict, List

import numpy as np
from rich.table import Table

from src.detect.anomaly import NORMAL, cluster_assign_batch
from src.detect.persistence import dumps_pipeline
from src.detect.pipeline import PipelineModel
from src.utils.errors import DataError

STAGES = ('scaler', 'stack', 'kpca', 'cluster', 'biased')


@dataclass(frozen=True)
class BenchReport:
    """各阶段每行耗时（毫秒）；没有经过的阶段按 0 计入"""

    stage_mean: Dict[str, float]
    stage_p99: Dict[str, float]
    total_mean: float
    total_p99: float
    rows: int
    repeats: int
    model_bytes: int

    def to_rows(self) -> List[Dict[str, object]]:
        rows: List[Dict[str, object]] = [
            {'stage': s, 'mean_ms': self.stage_mean[s], 'p99_ms': self.stage_p99[s]} for s in STAGES
        ]
        rows.append({'stage': 'total', 'mean_ms': self.total_mean, 'p99_ms': self.total_p99})
        rows.append({'stage': 'model_bytes', 'mean_ms': float(self.model_bytes), 'p99_ms': float(self.model_bytes)})
        return rows

    def to_table(self) -> Table:
        table = Table(title=f"检测延迟 ({self.rows} 行 × {self.repeats} 轮)")
        table.add_column("阶段", style="cyan")
        table.add_column("平均 (ms)", justify="right")
        table.add_column("P99 (ms)", justify="right")
        for s in STAGES:
            table.add_row(s, f"{self.stage_mean[s]:.4f}", f"{self.stage_p99[s]:.4f}")
        table.add_row("total", f"{self.total_mean:.4f}", f"{self.total_p99:.4f}", style="bold")
        table.add_row("模型大小", f"{self.model_bytes / 1e6:.3f} MB", "")
        return table


def _time_row(p: PipelineModel, x: np.ndarray) -> np.ndarray:
    """单行走一遍检测路径，返回各阶段纳秒耗时"""
    spent = np.zeros(len(STAGES), dtype=np.int64)
    t0 = time.perf_counter_ns()
    V = p.signature_view(x)
    t1 = time.perf_counter_ns()
    predicted = int(np.argmax(p.stack.predict_proba(V)[0]))
    t2 = time.perf_counter_ns()
    spent[0], spent[1] = t1 - t0, t2 - t1
    if predicted in p.positive_classes or p.anomaly is None:
        return spent
    Z = p.kpca.transform(V)
    t3 = time.perf_counter_ns()
    _, labels, purity = cluster_assign_batch(p.anomaly.clusters, Z)
    t4 = time.perf_counter_ns()
    spent[2], spent[3] = t3 - t2, t4 - t3
    if purity[0] < p.anomaly.p_star:
        model = p.anomaly.b1 if labels[0] == NORMAL else p.anomaly.b2
        if model is not None:
            model.predict_proba(Z)
            spent[4] = time.perf_counter_ns() - t4
    return spent


def bench_latency(p: PipelineModel, X: np.ndarray, warmup: int = 50, repeats: int = 3) -> BenchReport:
    """
    逐行测量检测延迟

    Args:
        p: 训练好的流水线
        X: 原始特征行（至少 1 行）
        warmup: 预热的行数（不计时）
        repeats: 重复轮数

    Returns:
        BenchReport: 各阶段与总耗时的平均值和 99 分位
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[0] < 1:
        raise DataError("基准测试至少需要 1 行输入")
    for i in range(warmup):
        _time_row(p, X[i % len(X)][None, :])

    samples = np.array([_time_row(p, x[None, :]) for _ in range(repeats) for x in X], dtype=np.float64) / 1e6
    totals = samples.sum(axis=1)
    return BenchReport(
        stage_mean={s: float(samples[:, j].mean()) for j, s in enumerate(STAGES)},
        stage_p99={s: float(np.percentile(samples[:, j], 99)) for j, s in enumerate(STAGES)},
        total_mean=float(totals.mean()),
        total_p99=float(np.percentile(totals, 99)),
        rows=len(X),
        repeats=repeats,
        model_bytes=len(dumps_pipeline(p)),
    )
