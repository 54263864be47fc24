"""
SMOTE 过采样
在少数类样本与其同类近邻之间线性插值生成合成样本
"""

from dataclasses import dataclass
from typing import Tuple

import numpy as np
from rich.console import Console
from scipy.spatial import cKDTree

from src.utils.errors import ConfigError, DataError

console = Console(stderr=True)


@dataclass(frozen=True)
class SmoteConfig:
    """SMOTE 参数"""

    k_neighbors: int = 5
    target_count: int = 100000
    seed: int = 0

    def __post_init__(self):
        if self.k_neighbors < 1:
            raise ConfigError(f"k_neighbors 必须 >= 1: {self.k_neighbors}")
        if self.target_count < 1:
            raise ConfigError(f"target_count 必须 >= 1: {self.target_count}")


def nearest_neighbors(X: np.ndarray, k: int) -> np.ndarray:
    """每行的 k 个欧氏最近邻（不含自身），返回 n×k 下标矩阵"""
    tree = cKDTree(X)
    _, idx = tree.query(X, k=k + 1)
    idx = np.asarray(idx).reshape(len(X), k + 1)
    # 重复点时自身不一定排在第一位
    not_self = idx != np.arange(len(X))[:, None]
    order = np.argsort(~not_self, axis=1, kind='stable')[:, :k]
    return np.take_along_axis(idx, order, axis=1)


def smote_samples(
    X: np.ndarray,
    n_new: int,
    k: int,
    rng: np.random.Generator,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """
    为一个类别生成合成样本

    Args:
        X: 该类别的样本矩阵
        n_new: 需要生成的行数
        k: 近邻数，必须小于 len(X)
        rng: 随机数生成器

    Returns:
        tuple: (合成样本, 父样本下标, 近邻下标, 插值系数 r)
    """
    X = np.asarray(X, dtype=np.float64)
    neighbors = nearest_neighbors(X, k)
    parents = rng.integers(0, len(X), size=n_new)
    picks = rng.integers(0, k, size=n_new)
    partners = neighbors[parents, picks]
    r = rng.random(n_new)
    synthetic = X[parents] + r[:, None] * (X[partners] - X[parents])
    return synthetic, parents, partners, r


def smote(d, cfg: SmoteConfig):
    """
    对样本数少于 target_count 的类别过采样至 target_count

    原始样本全部保留，合成样本追加在后面。

    Args:
        d: LabeledDataset
        cfg: SMOTE 参数

    Returns:
        LabeledDataset: 平衡后的数据集
    """
    rng = np.random.default_rng(cfg.seed)
    counts = np.bincount(d.labels, minlength=d.n_classes)
    blocks = [d.features]
    labels = [d.labels]
    for c in range(d.n_classes):
        size = int(counts[c])
        if size == 0 or size >= cfg.target_count:
            continue
        name = d.class_names[c]
        if size == 1:
            raise DataError(f"类别 {name!r} 只有 1 个样本，无法进行 SMOTE")
        k = cfg.k_neighbors
        if size < k + 1:
            k = size - 1
            console.print(f"⚠️  类别 {name!r} 只有 {size} 个样本, 近邻数降为 {k}", style="yellow")
        need = cfg.target_count - size
        synthetic, _, _, _ = smote_samples(d.features[d.labels == c], need, k, rng)
        blocks.append(synthetic)
        labels.append(np.full(need, c, dtype=np.int64))
        console.print(f"🔧 SMOTE: {name} {size} -> {cfg.target_count}", style="dim")

    if len(blocks) == 1:
        return d
    return type(d)(
        features=np.vstack(blocks),
        labels=np.concatenate(labels),
        feature_names=d.feature_names,
        class_names=d.class_names,
        positive_classes=d.positive_classes,
    )
