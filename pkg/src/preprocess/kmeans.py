"""
K-means 聚类
Lloyd/mini-batch 迭代、k-means++ 初始化、轮廓系数与基于 BO-GP 的 k 调优
"""

import math
from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
from rich.console import Console
from scipy.spatial.distance import cdist

from src.hpo.gp import bo_gp_optimize
from src.hpo.space import IntParam, SearchSpace
from src.utils.errors import DataError, InvariantError, check_width

console = Console(stderr=True)

METRICS = ('euclidean', 'manhattan')
CHUNK_ROWS = 16384


def _check_metric(distance: str) -> None:
    if distance not in METRICS:
        raise DataError(f"不支持的距离度量: {distance!r}, 可选 {METRICS}")


def pairwise(X: np.ndarray, C: np.ndarray, distance: str = 'euclidean') -> np.ndarray:
    """X 与 C 之间的距离矩阵"""
    return cdist(X, C, 'euclidean' if distance == 'euclidean' else 'cityblock')


def _cost(dist: np.ndarray, distance: str) -> np.ndarray:
    # 欧氏距离用平方和，曼哈顿距离用 L1 和
    return dist ** 2 if distance == 'euclidean' else dist


def assign(X: np.ndarray, centroids: np.ndarray, distance: str = 'euclidean') -> Tuple[np.ndarray, np.ndarray]:
    """
    最近质心分配（按块计算以控制内存）

    Returns:
        tuple: (簇下标, 到所属质心的距离)；等距时取下标小的簇
    """
    n = X.shape[0]
    labels = np.empty(n, dtype=np.int64)
    dists = np.empty(n, dtype=np.float64)
    for start in range(0, n, CHUNK_ROWS):
        block = pairwise(X[start:start + CHUNK_ROWS], centroids, distance)
        idx = np.argmin(block, axis=1)
        labels[start:start + CHUNK_ROWS] = idx
        dists[start:start + CHUNK_ROWS] = block[np.arange(block.shape[0]), idx]
    return labels, dists


@dataclass(frozen=True, eq=False)
class KMeansModel:
    """训练好的 k-means 模型"""

    centroids: np.ndarray
    distance: str
    inertia: float
    iterations_run: int
    inertia_trace: Tuple[float, ...] = ()

    @property
    def k(self) -> int:
        return self.centroids.shape[0]

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        check_width(X, self.centroids.shape[1], "k-means ")
        return assign(X, self.centroids, self.distance)[0]


def _kmeans_pp(X: np.ndarray, k: int, distance: str, rng: np.random.Generator) -> np.ndarray:
    n = X.shape[0]
    centers = np.empty((k, X.shape[1]), dtype=np.float64)
    centers[0] = X[rng.integers(n)]
    closest = _cost(pairwise(X, centers[:1], distance)[:, 0], distance)
    for i in range(1, k):
        total = closest.sum()
        if total <= 0:
            pick = int(rng.integers(n))
        else:
            pick = int(rng.choice(n, p=closest / total))
        centers[i] = X[pick]
        closest = np.minimum(closest, _cost(pairwise(X, centers[i:i + 1], distance)[:, 0], distance))
    return centers


def _update(X: np.ndarray, labels: np.ndarray, centroids: np.ndarray, distance: str) -> np.ndarray:
    new = centroids.copy()
    if distance == 'euclidean':
        counts = np.bincount(labels, minlength=len(centroids))
        sums = np.zeros_like(centroids)
        np.add.at(sums, labels, X)
        filled = counts > 0
        new[filled] = sums[filled] / counts[filled, None]
    else:
        # 曼哈顿距离下坐标中位数使 L1 目标不增
        for j in np.unique(labels):
            new[j] = np.median(X[labels == j], axis=0)
    return new


def _reseed_empty(X: np.ndarray, labels: np.ndarray, dists: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    counts = np.bincount(labels, minlength=len(centroids))
    empty = np.flatnonzero(counts == 0)
    if empty.size == 0:
        return centroids
    centroids = centroids.copy()
    far = np.argsort(-dists, kind='stable')
    for j, row in zip(empty, far):
        centroids[j] = X[row]
    return centroids


def kmeans_fit(
    X: np.ndarray,
    k: int,
    distance: str = 'euclidean',
    max_iter: int = 300,
    tol: float = 1e-4,
    seed: int = 0,
    minibatch_size: Optional[int] = None,
) -> KMeansModel:
    """
    训练 k-means

    Args:
        X: n×f 有限值矩阵
        k: 簇数，1 <= k <= n
        distance: euclidean 或 manhattan
        max_iter: 最大迭代次数
        tol: 质心最大位移小于 tol 时停止
        seed: 随机种子（k-means++ 初始化与 mini-batch 采样）
        minibatch_size: 为空或 >= n 时使用全量 Lloyd 迭代

    Returns:
        KMeansModel: 训练结果；全量模式下 inertia_trace 单调不增
    """
    X = np.asarray(X, dtype=np.float64)
    _check_metric(distance)
    n = X.shape[0]
    if k <= 0:
        raise DataError(f"k 必须为正: {k}")
    if k > n:
        raise DataError(f"k={k} 大于样本数 {n}")
    if not np.all(np.isfinite(X)):
        raise DataError("k-means 输入含非有限值")

    rng = np.random.default_rng(seed)
    centroids = _kmeans_pp(X, k, distance, rng)
    if minibatch_size and minibatch_size < n:
        return _minibatch(X, centroids, distance, max_iter, tol, rng, minibatch_size)

    trace = []
    iterations = 0
    for iterations in range(1, max_iter + 1):
        labels, dists = assign(X, centroids, distance)
        objective = float(_cost(dists, distance).sum())
        if trace and objective > trace[-1] * (1 + 1e-12) + 1e-12:
            raise InvariantError(f"k-means 目标函数上升: {trace[-1]} -> {objective}")
        trace.append(objective)
        centroids = _reseed_empty(X, labels, dists, centroids)
        new = _update(X, labels, centroids, distance)
        shift = float(np.max(np.linalg.norm(new - centroids, axis=1)))
        centroids = new
        if shift < tol:
            break

    _, dists = assign(X, centroids, distance)
    inertia = float(_cost(dists, distance).sum())
    if trace and inertia > trace[-1] * (1 + 1e-12) + 1e-12:
        raise InvariantError(f"k-means 目标函数上升: {trace[-1]} -> {inertia}")
    trace.append(inertia)
    return KMeansModel(centroids, distance, inertia, iterations, tuple(trace))


def _minibatch(
    X: np.ndarray,
    centroids: np.ndarray,
    distance: str,
    max_iter: int,
    tol: float,
    rng: np.random.Generator,
    batch: int,
) -> KMeansModel:
    n = X.shape[0]
    counts = np.zeros(len(centroids), dtype=np.float64)
    iterations = 0
    for iterations in range(1, max_iter + 1):
        rows = X[rng.choice(n, size=batch, replace=False)]
        labels, _ = assign(rows, centroids, distance)
        old = centroids.copy()
        for j in np.unique(labels):
            members = rows[labels == j]
            counts[j] += len(members)
            eta = len(members) / counts[j]
            target = members.mean(axis=0) if distance == 'euclidean' else np.median(members, axis=0)
            centroids[j] = (1 - eta) * centroids[j] + eta * target
        shift = float(np.max(np.linalg.norm(centroids - old, axis=1)))
        if shift < tol:
            break
    _, dists = assign(X, centroids, distance)
    inertia = float(_cost(dists, distance).sum())
    return KMeansModel(centroids, distance, inertia, iterations, (inertia,))


def silhouette(X: np.ndarray, assignments: np.ndarray, distance: str = 'euclidean') -> float:
    """
    平均轮廓系数

    s = (b - a) / max(a, b)；单元素簇的样本记 0；a = b = 0 时记 0。
    """
    X = np.asarray(X, dtype=np.float64)
    labels = np.asarray(assignments)
    clusters, codes = np.unique(labels, return_inverse=True)
    if len(clusters) < 2:
        raise DataError("轮廓系数需要至少 2 个非空簇")
    n = X.shape[0]
    sizes = np.bincount(codes).astype(np.float64)
    onehot = np.zeros((n, len(clusters)), dtype=np.float64)
    onehot[np.arange(n), codes] = 1.0
    scores = np.empty(n, dtype=np.float64)
    for start in range(0, n, 2048):
        block = pairwise(X[start:start + 2048], X, distance)
        sums = block @ onehot
        own = codes[start:start + 2048]
        rows = np.arange(len(own))
        own_size = sizes[own]
        with np.errstate(divide='ignore', invalid='ignore'):
            a = sums[rows, own] / np.maximum(own_size - 1, 1)
            means = sums / sizes
        means[rows, own] = np.inf
        b = means.min(axis=1)
        denom = np.maximum(a, b)
        with np.errstate(divide='ignore', invalid='ignore'):
            s = np.where(denom > 0, (b - a) / denom, 0.0)
        s[own_size == 1] = 0.0
        scores[start:start + 2048] = s
    return float(scores.mean())


def tune_k(
    X: np.ndarray,
    k_range: Sequence[int],
    budget: int = 20,
    seed: int = 0,
    distance: str = 'euclidean',
    eval_subsample: int = 2000,
    max_iter: int = 100,
    minibatch_size: Optional[int] = None,
) -> Tuple[int, KMeansModel]:
    """
    用 BO-GP 在整数 k 上最大化轮廓系数

    轮廓系数在固定的评估子样本上计算。

    Returns:
        tuple: (最佳 k, 对应模型)
    """
    X = np.asarray(X, dtype=np.float64)
    low, high = int(k_range[0]), int(k_range[-1])
    if low < 2 or high > X.shape[0] or low > high:
        raise DataError(f"k 范围 [{low},{high}] 必须位于 [2,{X.shape[0]}]")
    rng = np.random.default_rng(seed)
    sample = rng.choice(X.shape[0], size=min(eval_subsample, X.shape[0]), replace=False)
    X_eval = X[np.sort(sample)]
    models: Dict[int, KMeansModel] = {}

    def objective(assignment):
        k = int(assignment['k'])
        model = kmeans_fit(X, k, distance, max_iter=max_iter, seed=seed, minibatch_size=minibatch_size)
        models[k] = model
        labels = model.predict(X_eval)
        if len(np.unique(labels)) < 2:
            return 1.0
        return -silhouette(X_eval, labels, distance)

    space = SearchSpace([IntParam('k', low, high)])
    best = bo_gp_optimize(objective, space, budget, seed, name='k-means k')
    k_best = int(best.assignment['k'])
    console.print(f"✅ 最佳 k = {k_best}, 轮廓系数 {-best.objective:.4f}")
    return k_best, models[k_best]


def cluster_sample(d, model: KMeansModel, fraction: float, seed: int = 0, view: Optional[np.ndarray] = None):
    """
    按簇分层随机抽样

    每个簇抽取 ceil(fraction * |簇|) 行，结果整体打乱。

    Args:
        d: LabeledDataset
        model: 在 d 的特征上训练的 k-means 模型
        fraction: 抽样比例 (0, 1]
        seed: 随机种子
        view: 模型所在空间中的特征（如标准化后的特征），默认 d.features
    """
    if d.n_samples == 0:
        raise DataError("不能对空数据集抽样")
    if not 0.0 < fraction <= 1.0:
        raise DataError(f"抽样比例必须位于 (0,1]: {fraction}")
    rng = np.random.default_rng(seed)
    clusters = model.predict(d.features if view is None else view)
    picked = []
    for c in range(model.k):
        members = np.flatnonzero(clusters == c)
        if members.size == 0:
            continue
        take = min(members.size, math.ceil(fraction * members.size - 1e-9))
        picked.append(rng.choice(members, size=take, replace=False))
    rows = rng.permutation(np.concatenate(picked))
    return d.subset(rows)
