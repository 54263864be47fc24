"""
核主成分分析 (KPCA)
核矩阵中心化、特征分解与新样本投影
"""

from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence

import numpy as np
from rich.console import Console
from scipy.linalg import eigh
from scipy.spatial.distance import cdist

from src.hpo.gp import bo_gp_optimize
from src.hpo.space import CategoricalParam, IntParam, SearchSpace
from src.utils.errors import ConfigError, DataError, check_width

console = Console(stderr=True)

KERNELS = ('rbf', 'poly', 'linear')
CHUNK_ROWS = 4096
# 相对最大特征值低于该比例的视为非正
EIGEN_TOLERANCE = 1e-10


@dataclass(frozen=True)
class KernelSpec:
    """核函数：rbf exp(-γ|x-y|²)、poly (γ x·y + coef0)^degree、linear x·y；γ 为空时取 1/f"""

    kind: str = 'rbf'
    gamma: Optional[float] = None
    degree: int = 3
    coef0: float = 1.0

    def __post_init__(self):
        if self.kind not in KERNELS:
            raise ConfigError(f"未知的核函数 {self.kind!r}, 可选 {KERNELS}")
        if self.gamma is not None and self.gamma <= 0:
            raise ConfigError(f"gamma 必须为正: {self.gamma}")
        if self.degree < 1:
            raise ConfigError(f"degree 必须 >= 1: {self.degree}")

    def resolved(self, n_features: int) -> 'KernelSpec':
        if self.gamma is None and self.kind != 'linear':
            return replace(self, gamma=1.0 / n_features)
        return self

    def __call__(self, A: np.ndarray, B: np.ndarray) -> np.ndarray:
        gamma = self.gamma if self.gamma is not None else 1.0 / A.shape[1]
        if self.kind == 'rbf':
            return np.exp(-gamma * cdist(A, B, 'sqeuclidean'))
        if self.kind == 'poly':
            return (gamma * (A @ B.T) + self.coef0) ** self.degree
        return A @ B.T


@dataclass(frozen=True, eq=False)
class KpcaModel:
    """训练好的 KPCA：保存训练行与中心化统计量以便投影新样本"""

    kernel: KernelSpec
    training_rows: np.ndarray
    eigenvectors: np.ndarray
    eigenvalues: np.ndarray
    row_means: np.ndarray
    grand_mean: float

    @property
    def p(self) -> int:
        return len(self.eigenvalues)

    @property
    def n_features(self) -> int:
        return self.training_rows.shape[1]

    @property
    def projection(self) -> np.ndarray:
        return self.eigenvectors / np.sqrt(self.eigenvalues)

    def transform(self, X: np.ndarray) -> np.ndarray:
        return kpca_transform(self, X)


def kpca_fit(X: np.ndarray, kernel: KernelSpec = KernelSpec(), p: int = 8) -> KpcaModel:
    """
    拟合 KPCA

    中心化 m×m 核矩阵后特征分解，保留前 p 个正特征值；正特征值不足 p 个时减少 p 并警告。
    每个特征向量的符号使其绝对值最大的分量为正。

    Args:
        X: m×f 训练矩阵（调用方负责控制 m）
        kernel: 核函数
        p: 提取的维数
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise DataError("KPCA 至少需要 2 行训练数据")
    if p < 1:
        raise ConfigError(f"p 必须 >= 1: {p}")
    kernel = kernel.resolved(X.shape[1])
    K = kernel(X, X)
    row_means = K.mean(axis=0)
    grand_mean = float(K.mean())
    Kc = K - row_means[None, :] - row_means[:, None] + grand_mean
    values, vectors = eigh(Kc)
    order = np.argsort(-values, kind='stable')
    values, vectors = values[order], vectors[:, order]

    top = values[0] if len(values) else 0.0
    positive = int(np.sum(values > max(top, 0.0) * EIGEN_TOLERANCE)) if top > 0 else 0
    if positive == 0:
        raise DataError("中心化核矩阵没有正特征值（训练行可能全部相同）")
    if positive < p:
        console.print(f"⚠️  只有 {positive} 个正特征值, 提取维数由 {p} 降为 {positive}", style="yellow")
        p = positive
    values, vectors = values[:p], vectors[:, :p].copy()

    peaks = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[peaks, np.arange(p)])
    vectors *= np.where(signs == 0, 1.0, signs)
    return KpcaModel(kernel, X, vectors, values, row_means, grand_mean)


def kpca_transform(model: KpcaModel, X: np.ndarray) -> np.ndarray:
    """把新样本投影到 p 维主成分空间（按块计算核矩阵）"""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    check_width(X, model.n_features, "KPCA ")
    alphas = model.projection
    out = np.empty((X.shape[0], model.p), dtype=np.float64)
    for start in range(0, X.shape[0], CHUNK_ROWS):
        Kx = model.kernel(X[start:start + CHUNK_ROWS], model.training_rows)
        Kc = Kx - Kx.mean(axis=1, keepdims=True) - model.row_means[None, :] + model.grand_mean
        out[start:start + CHUNK_ROWS] = Kc @ alphas
    return out


def tune_kpca(
    X: np.ndarray,
    evaluate: Callable[[KpcaModel], float],
    budget: int = 10,
    seed: int = 0,
    p_range: Sequence[int] = (2, 16),
    kernels: Sequence[str] = KERNELS,
    base: KernelSpec = KernelSpec(),
) -> KpcaModel:
    """
    用 BO-GP 调提取维数与核类型

    Args:
        X: KPCA 训练行
        evaluate: 模型 -> 验证准确率（越大越好）
        budget: 评估次数
        seed: 随机种子
        p_range: 维数范围
        kernels: 候选核函数
        base: 其余核参数

    Returns:
        KpcaModel: 最优配置重新拟合的模型
    """
    low = max(1, int(p_range[0]))
    high = max(low, min(int(p_range[-1]), X.shape[0] - 1))
    cache = {}

    def fit(assignment) -> KpcaModel:
        key = (int(assignment['p']), assignment['kernel'])
        if key not in cache:
            cache[key] = kpca_fit(X, replace(base, kind=key[1]), key[0])
        return cache[key]

    def objective(assignment):
        return -evaluate(fit(assignment))

    space = SearchSpace([IntParam('p', low, high), CategoricalParam('kernel', tuple(kernels))])
    best = bo_gp_optimize(objective, space, budget, seed, name='kpca')
    return fit(best.assignment)
