"""
随机森林与极端随机树
"""

from typing import List

import numpy as np
from joblib import Parallel, delayed

from src.learners.tree import Tree, TreeHyperparams, fit_classification_tree


def _fit_member(X: np.ndarray, y: np.ndarray, n_classes: int, hp: TreeHyperparams,
                variant: str, seed: np.random.SeedSequence) -> Tree:
    rng = np.random.default_rng(seed)
    n = len(y)
    if variant == 'bagging':
        rows = rng.integers(0, n, size=n) if hp.bootstrap else np.arange(n)
    elif hp.subsample < 1.0:
        size = max(1, int(round(hp.subsample * n)))
        rows = np.sort(rng.choice(n, size=size, replace=False))
    else:
        rows = np.arange(n)
    return fit_classification_tree(X, y, n_classes, hp, rng, rows=rows,
                                   extra=variant == 'extra', default_features='sqrt')


def fit_forest_trees(
    X: np.ndarray,
    y: np.ndarray,
    n_classes: int,
    hp: TreeHyperparams,
    variant: str,
    seed: int = 0,
    n_jobs: int = 1,
) -> List[Tree]:
    """
    训练 n_estimators 棵树

    bagging: bootstrap 行 + 逐节点特征抽样 + 精确阈值搜索；
    extra: 不做 bootstrap（可按 subsample 取行子集），每个候选特征取随机阈值。
    每棵树的种子由 SeedSequence(seed) 派生，结果与 n_jobs 无关。
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    seeds = np.random.SeedSequence(seed).spawn(hp.n_estimators)
    if n_jobs == 1:
        return [_fit_member(X, y, n_classes, hp, variant, s) for s in seeds]
    return Parallel(n_jobs=n_jobs, prefer='threads')(
        delayed(_fit_member)(X, y, n_classes, hp, variant, s) for s in seeds
    )
