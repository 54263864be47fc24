"""
训练/测试划分
支持分层抽样与固定种子的确定性划分
"""

from typing import Tuple

import numpy as np

from src.ingest.dataset import LabeledDataset, SplitSpec
from src.utils.errors import DataError


def allocate(sizes: np.ndarray, fraction: float) -> np.ndarray:
    """
    最大余数法分配各组的训练样本数

    总数等于 round(fraction * sum(sizes))，每组与 fraction*size 的差不超过 1。
    余数相同时下标小的组优先。
    """
    exact = fraction * sizes.astype(np.float64)
    base = np.floor(exact).astype(np.int64)
    total = int(np.floor(fraction * sizes.sum() + 0.5))
    remaining = total - int(base.sum())
    if remaining > 0:
        order = np.lexsort((np.arange(len(sizes)), -(exact - base)))
        base[order[:remaining]] += 1
    return base


def split_indices(d: LabeledDataset, spec: SplitSpec) -> Tuple[np.ndarray, np.ndarray]:
    """返回 (训练行下标, 测试行下标)，均已排序"""
    rng = np.random.default_rng(spec.seed)
    n = d.n_samples
    if not spec.stratified:
        perm = rng.permutation(n)
        cut = int(np.floor(spec.train_fraction * n + 0.5))
        return np.sort(perm[:cut]), np.sort(perm[cut:])

    counts = np.bincount(d.labels, minlength=d.n_classes)
    small = [d.class_names[c] for c in range(d.n_classes) if counts[c] == 1]
    if small:
        raise DataError(f"分层划分要求每类至少 2 个样本, 以下类别不足: {small}")
    present = np.flatnonzero(counts)
    quota = allocate(counts[present], spec.train_fraction)
    train_parts, test_parts = [], []
    for c, q in zip(present, quota):
        members = rng.permutation(np.flatnonzero(d.labels == c))
        train_parts.append(members[:q])
        test_parts.append(members[q:])
    return np.sort(np.concatenate(train_parts)), np.sort(np.concatenate(test_parts))


def split_holdout(d: LabeledDataset, spec: SplitSpec) -> Tuple[LabeledDataset, LabeledDataset]:
    """按 SplitSpec 划分为互不相交的训练集与测试集"""
    train_idx, test_idx = split_indices(d, spec)
    if train_idx.size == 0 or test_idx.size == 0:
        raise DataError(f"划分结果为空: 训练 {train_idx.size} 行, 测试 {test_idx.size} 行")
    return d.subset(train_idx), d.subset(test_idx)


def stratified_kfold(y: np.ndarray, folds: int, seed: int = 0) -> np.ndarray:
    """
    分层 k 折划分

    每个类别的成员打乱后轮流分配到各折，分配起点在类别之间接续，
    保证各折大小相差不超过 1、每类在各折中的数量相差不超过 1。

    Args:
        y: 类别标签
        folds: 折数 >= 2
        seed: 随机种子

    Returns:
        np.ndarray: 每行所属的折号 [0, folds)
    """
    y = np.asarray(y, dtype=np.int64)
    if folds < 2:
        raise DataError(f"折数必须 >= 2: {folds}")
    if len(y) < folds:
        raise DataError(f"样本数 {len(y)} 少于折数 {folds}")
    rng = np.random.default_rng(seed)
    fold_of = np.empty(len(y), dtype=np.int64)
    offset = 0
    for c in np.unique(y):
        members = rng.permutation(np.flatnonzero(y == c))
        fold_of[members] = (offset + np.arange(len(members))) % folds
        offset = (offset + len(members)) % folds
    return fold_of
