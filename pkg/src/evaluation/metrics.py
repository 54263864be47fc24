"""
评估指标
混淆矩阵、二分类折叠后的 Acc/DR/FAR/F1 与逐类宏平均
"""

from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np
from rich.table import Table

from src.utils.errors import DataError


def _ratio(num: float, denom: float) -> float:
    return float(num / denom) if denom > 0 else 0.0


@dataclass(frozen=True, eq=False)
class MetricsReport:
    """
    评估报告

    二分类指标基于"所有攻击类 = 正类"的折叠：
    Acc = (TP+TN)/n, DR = TP/(TP+FN), FAR = FP/(TN+FP), F1 = 2TP/(2TP+FP+FN)。
    分母为 0 的比率记 0。
    """

    confusion: np.ndarray
    class_names: tuple
    tp: int
    tn: int
    fp: int
    fn: int
    precision: np.ndarray
    recall: np.ndarray
    f1_per_class: np.ndarray
    train_time: float = 0.0
    test_time: float = 0.0
    extras: Dict[str, float] = field(default_factory=dict)

    @property
    def n(self) -> int:
        return int(self.confusion.sum())

    @property
    def accuracy(self) -> float:
        return _ratio(self.tp + self.tn, self.tp + self.tn + self.fp + self.fn)

    @property
    def detection_rate(self) -> float:
        return _ratio(self.tp, self.tp + self.fn)

    @property
    def false_alarm_rate(self) -> float:
        return _ratio(self.fp, self.tn + self.fp)

    @property
    def f1(self) -> float:
        return _ratio(2 * self.tp, 2 * self.tp + self.fp + self.fn)

    @property
    def macro_f1(self) -> float:
        present = self.confusion.sum(axis=1) + self.confusion.sum(axis=0) > 0
        if not present.any():
            return 0.0
        return float(self.f1_per_class[present].mean())

    @property
    def multiclass_accuracy(self) -> float:
        return _ratio(np.trace(self.confusion), self.confusion.sum())

    def summary(self) -> Dict[str, float]:
        out = {
            'accuracy': self.accuracy,
            'detection_rate': self.detection_rate,
            'false_alarm_rate': self.false_alarm_rate,
            'f1': self.f1,
            'macro_f1': self.macro_f1,
            'train_time': self.train_time,
            'test_time': self.test_time,
        }
        out.update(self.extras)
        return out

    def to_rows(self) -> List[Dict[str, object]]:
        """机器可读的行：一行汇总 + 每类一行"""
        rows: List[Dict[str, object]] = [{'scope': 'binary', **self.summary()}]
        for i, name in enumerate(self.class_names):
            rows.append({
                'scope': name,
                'precision': float(self.precision[i]),
                'recall': float(self.recall[i]),
                'f1': float(self.f1_per_class[i]),
                'support': int(self.confusion[i].sum()),
            })
        return rows

    def to_table(self, title: str = "评估结果") -> Table:
        table = Table(title=title)
        table.add_column("指标", style="cyan")
        table.add_column("值", justify="right")
        for key, value in self.summary().items():
            table.add_row(key, f"{value:.6f}")
        table.add_row("TP/TN/FP/FN", f"{self.tp}/{self.tn}/{self.fp}/{self.fn}")
        return table

    def class_table(self) -> Table:
        table = Table(title="逐类指标")
        for column in ("类别", "precision", "recall", "f1", "support"):
            table.add_column(column, justify="right" if column != "类别" else "left")
        for row in self.to_rows()[1:]:
            table.add_row(str(row['scope']), f"{row['precision']:.4f}", f"{row['recall']:.4f}",
                          f"{row['f1']:.4f}", str(row['support']))
        return table


def confusion_matrix(predictions: np.ndarray, truth: np.ndarray, n_classes: int) -> np.ndarray:
    """行 = 真实类别，列 = 预测类别"""
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (truth, predictions), 1)
    return cm


def per_class_scores(cm: np.ndarray):
    tp = np.diag(cm).astype(np.float64)
    predicted = cm.sum(axis=0).astype(np.float64)
    actual = cm.sum(axis=1).astype(np.float64)
    with np.errstate(divide='ignore', invalid='ignore'):
        precision = np.where(predicted > 0, tp / predicted, 0.0)
        recall = np.where(actual > 0, tp / actual, 0.0)
        f1 = np.where(predicted + actual > 0, 2 * tp / (predicted + actual), 0.0)
    return precision, recall, f1


def compute_metrics(
    predictions: Sequence[int],
    truth: Sequence[int],
    attack_classes: Iterable[int],
    class_names: Optional[Sequence[str]] = None,
    n_classes: Optional[int] = None,
) -> MetricsReport:
    """
    计算评估指标

    Args:
        predictions: 预测类别下标
        truth: 真实类别下标
        attack_classes: 攻击类别下标集合（二分类折叠时的正类）
        class_names: 类别名，默认用下标
        n_classes: 类别数，默认取 class_names 长度或最大下标 + 1

    Returns:
        MetricsReport: 评估报告
    """
    pred = np.asarray(predictions, dtype=np.int64)
    true = np.asarray(truth, dtype=np.int64)
    if pred.size == 0:
        raise DataError("不能对空的预测结果计算指标")
    if pred.shape != true.shape:
        raise DataError(f"预测与真实标签长度不一致: {pred.shape} vs {true.shape}")
    if n_classes is None:
        n_classes = len(class_names) if class_names is not None else int(max(pred.max(), true.max())) + 1
    if class_names is None:
        class_names = tuple(str(i) for i in range(n_classes))
    if min(pred.min(), true.min()) < 0 or max(pred.max(), true.max()) >= n_classes:
        raise DataError(f"类别下标超出 [0,{n_classes})")

    cm = confusion_matrix(pred, true, n_classes)
    positive = np.isin(np.arange(n_classes), sorted(attack_classes))
    pred_pos, true_pos = positive[pred], positive[true]
    precision, recall, f1 = per_class_scores(cm)
    return MetricsReport(
        confusion=cm,
        class_names=tuple(class_names),
        tp=int(np.sum(pred_pos & true_pos)),
        tn=int(np.sum(~pred_pos & ~true_pos)),
        fp=int(np.sum(pred_pos & ~true_pos)),
        fn=int(np.sum(~pred_pos & true_pos)),
        precision=precision,
        recall=recall,
        f1_per_class=f1,
    )


def macro_f1(predictions: np.ndarray, truth: np.ndarray, n_classes: int) -> float:
    """真实或预测中出现过的类别上的平均 F1"""
    cm = confusion_matrix(np.asarray(predictions, dtype=np.int64), np.asarray(truth, dtype=np.int64), n_classes)
    _, _, f1 = per_class_scores(cm)
    present = cm.sum(axis=1) + cm.sum(axis=0) > 0
    return float(f1[present].mean()) if present.any() else 0.0


def average_reports(reports: Sequence[MetricsReport]) -> MetricsReport:
    """
    合并多折结果

    混淆矩阵与 TP/TN/FP/FN 累加，逐类指标由累加矩阵重新计算；
    时间取各折平均，extras 取各折平均。
    """
    if not reports:
        raise DataError("没有可合并的评估结果")
    cm = sum(r.confusion for r in reports)
    precision, recall, f1 = per_class_scores(cm)
    keys = set().union(*(r.extras for r in reports))
    extras = {k: float(np.mean([r.extras.get(k, 0.0) for r in reports])) for k in sorted(keys)}
    extras['fold_accuracy_mean'] = float(np.mean([r.accuracy for r in reports]))
    extras['fold_f1_mean'] = float(np.mean([r.f1 for r in reports]))
    return MetricsReport(
        confusion=cm,
        class_names=reports[0].class_names,
        tp=sum(r.tp for r in reports),
        tn=sum(r.tn for r in reports),
        fp=sum(r.fp for r in reports),
        fn=sum(r.fn for r in reports),
        precision=precision,
        recall=recall,
        f1_per_class=f1,
        train_time=float(np.mean([r.train_time for r in reports])),
        test_time=float(np.mean([r.test_time for r in reports])),
        extras=extras,
    )
