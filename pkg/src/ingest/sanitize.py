"""
数据清洗
非有限值修复与类别注册表规范化
"""

from typing import List

import numpy as np
from rich.console import Console

from src.ingest.dataset import LabeledDataset
from src.utils.errors import DataError

console = Console(stderr=True)


def constant_columns(d: LabeledDataset) -> List[str]:
    """返回取值恒定的列名"""
    X = d.features
    finite = np.where(np.isfinite(X), X, np.nan)
    with np.errstate(invalid='ignore'):
        spread = np.nanmax(finite, axis=0) - np.nanmin(finite, axis=0)
    return [d.feature_names[j] for j in np.flatnonzero(spread == 0)]


def _report_constants(d: LabeledDataset) -> None:
    for name in constant_columns(d):
        console.print(f"⚠️  恒定列 {name!r} 已保留", style="yellow")


def sanitize(d: LabeledDataset) -> LabeledDataset:
    """
    清洗数据集

    非有限值替换为该列有限值的中位数；恒定列保留但会报告；
    类别注册表按字典序重新编码。对已清洗的数据集是恒等操作。
    """
    X = d.features
    bad = ~np.isfinite(X)
    features = X
    if bad.any():
        features = X.copy()
        for j in np.flatnonzero(bad.any(axis=0)):
            column = features[:, j]
            finite = column[~bad[:, j]]
            if finite.size == 0:
                raise DataError(f"列 {d.feature_names[j]!r} 没有任何有限值")
            column[bad[:, j]] = np.median(finite)
        console.print(f"🔧 修复了 {int(bad.sum())} 个非有限值", style="dim")

    order = sorted(range(d.n_classes), key=lambda i: d.class_names[i])
    reordered = order != list(range(d.n_classes))

    if features is X and not reordered:
        _report_constants(d)
        return d

    labels = d.labels
    class_names = d.class_names
    positive = d.positive_classes
    if reordered:
        remap = np.empty(d.n_classes, dtype=np.int64)
        remap[order] = np.arange(d.n_classes)
        labels = remap[d.labels]
        class_names = tuple(d.class_names[i] for i in order)
        positive = frozenset(int(remap[c]) for c in d.positive_classes)

    cleaned = LabeledDataset(features, labels, d.feature_names, class_names, positive, d.timestamps)
    _report_constants(cleaned)
    return cleaned
