"""
梯度提升树
softmax 链接的一对多加法模型，叶值取带 L2 正则的牛顿步
"""

from typing import List, Tuple

import numpy as np
from joblib import Parallel, delayed

from src.learners.tree import Tree, TreeHyperparams, fit_regression_tree

PRIOR_FLOOR = 1e-12


def softmax(F: np.ndarray) -> np.ndarray:
    Z = F - F.max(axis=-1, keepdims=True)
    E = np.exp(Z)
    return E / E.sum(axis=-1, keepdims=True)


def log_loss(F: np.ndarray, y: np.ndarray) -> float:
    Z = F - F.max(axis=1, keepdims=True)
    log_p = Z - np.log(np.exp(Z).sum(axis=1, keepdims=True))
    return float(-log_p[np.arange(len(y)), y].mean())


def prior_scores(y: np.ndarray, n_classes: int) -> np.ndarray:
    """初始得分：类别先验的对数（下限 1e-12）"""
    prior = np.bincount(y, minlength=n_classes) / len(y)
    return np.log(np.maximum(prior, PRIOR_FLOOR))


def _fit_class_tree(X, grad, hess, hp, seed) -> Tree:
    return fit_regression_tree(X, grad, hess, hp, np.random.default_rng(seed))


def fit_boosted_trees(
    X: np.ndarray,
    y: np.ndarray,
    n_classes: int,
    hp: TreeHyperparams,
    seed: int = 0,
    n_jobs: int = 1,
) -> Tuple[List[Tree], np.ndarray, List[float]]:
    """
    训练提升树

    每轮对每个类别拟合一棵回归树（梯度 p_k - y_k，海森 p_k(1 - p_k)），
    树按 round-major 顺序存放。只有一个类别出现时不训练任何树。

    Returns:
        tuple: (树列表, 初始得分, 每轮训练 log-loss)
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    init = prior_scores(y, n_classes)
    if np.count_nonzero(np.bincount(y, minlength=n_classes)) <= 1:
        return [], init, []

    n = len(y)
    F = np.tile(init, (n, 1))
    Y = np.zeros((n, n_classes))
    Y[np.arange(n), y] = 1.0
    seeds = np.random.SeedSequence(seed).spawn(hp.n_estimators * n_classes)
    trees: List[Tree] = []
    trace: List[float] = []
    for r in range(hp.n_estimators):
        P = softmax(F)
        grads = P - Y
        hess = np.maximum(P * (1.0 - P), 1e-16)
        round_seeds = seeds[r * n_classes:(r + 1) * n_classes]
        if n_jobs == 1:
            round_trees = [_fit_class_tree(X, grads[:, k], hess[:, k], hp, round_seeds[k])
                           for k in range(n_classes)]
        else:
            round_trees = Parallel(n_jobs=n_jobs, prefer='threads')(
                delayed(_fit_class_tree)(X, grads[:, k], hess[:, k], hp, round_seeds[k])
                for k in range(n_classes)
            )
        for k, tree in enumerate(round_trees):
            F[:, k] += hp.learning_rate * tree.predict(X)[:, 0]
        trees.extend(round_trees)
        trace.append(log_loss(F, y))
    return trees, init, trace
