"""
集成模型
四种树学习器（single / bagging / extra / boosted）的统一训练与预测接口
"""

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from src.learners.boosting import fit_boosted_trees, softmax
from src.learners.forest import fit_forest_trees
from src.learners.tree import Tree, TreeHyperparams, fit_classification_tree
from src.utils.errors import ConfigError, DataError, check_width

VARIANTS = ('single', 'bagging', 'extra', 'boosted')


def check_variant(variant: str) -> str:
    if variant not in VARIANTS:
        raise ConfigError(f"未知的学习器变体 {variant!r}, 可选 {VARIANTS}")
    return variant


@dataclass(frozen=True, eq=False)
class EnsembleModel:
    """
    训练好的树模型

    非提升变体：预测为各树叶子分布的平均；
    提升变体：trees 按轮次存放，每轮 n_classes 棵，得分经 softmax 得到分布。
    """

    variant: str
    n_classes: int
    n_features: int
    trees: Tuple[Tree, ...]
    init_scores: Optional[np.ndarray] = None
    learning_rate: float = 1.0
    train_loss_trace: Tuple[float, ...] = ()

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    def decision_scores(self, X: np.ndarray) -> np.ndarray:
        F = np.tile(self.init_scores, (X.shape[0], 1))
        for i, tree in enumerate(self.trees):
            F[:, i % self.n_classes] += self.learning_rate * tree.predict(X)[:, 0]
        return F

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        """类别分布；一维输入返回一维结果"""
        X = np.asarray(X, dtype=np.float64)
        single = X.ndim == 1
        X = np.atleast_2d(X)
        check_width(X, self.n_features, f"{self.variant} 模型")
        if self.variant == 'boosted':
            P = softmax(self.decision_scores(X))
        else:
            P = np.zeros((X.shape[0], self.n_classes))
            for tree in self.trees:
                P += tree.predict(X)
            P /= len(self.trees)
        return P[0] if single else P

    def predict(self, X: np.ndarray) -> np.ndarray:
        """argmax，平票取下标小的类别"""
        P = self.predict_proba(X)
        return np.argmax(P, axis=-1)


def predict_proba(m: EnsembleModel, x: np.ndarray) -> np.ndarray:
    return m.predict_proba(x)


def predict(m: EnsembleModel, x: np.ndarray):
    return m.predict(x)


def default_hyperparams(variant: str) -> TreeHyperparams:
    """各变体的默认超参数"""
    check_variant(variant)
    if variant == 'single':
        return TreeHyperparams(max_depth=20, n_estimators=1)
    if variant == 'boosted':
        return TreeHyperparams(max_depth=6, n_estimators=50, learning_rate=0.1)
    return TreeHyperparams(max_depth=20, n_estimators=50)


def fit_variant(
    variant: str,
    X: np.ndarray,
    y: np.ndarray,
    n_classes: int,
    hp: Optional[TreeHyperparams] = None,
    seed: int = 0,
    n_jobs: int = 1,
) -> EnsembleModel:
    """
    按变体名训练模型

    Args:
        variant: single / bagging / extra / boosted
        X: 特征矩阵
        y: 类别下标 [0, n_classes)
        n_classes: 类别数
        hp: 超参数，默认 default_hyperparams(variant)
        seed: 随机种子
        n_jobs: 并行线程数

    Returns:
        EnsembleModel: 训练好的模型
    """
    check_variant(variant)
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise DataError("训练数据必须是非空的二维矩阵")
    if len(y) != X.shape[0]:
        raise DataError(f"标签长度 {len(y)} 与行数 {X.shape[0]} 不一致")
    if y.min() < 0 or y.max() >= n_classes:
        raise DataError(f"标签超出 [0,{n_classes})")
    hp = hp or default_hyperparams(variant)
    f = X.shape[1]

    if variant == 'single':
        tree = fit_classification_tree(X, y, n_classes, hp, np.random.default_rng(seed))
        return EnsembleModel('single', n_classes, f, (tree,))
    if variant == 'boosted':
        trees, init, trace = fit_boosted_trees(X, y, n_classes, hp, seed, n_jobs)
        return EnsembleModel('boosted', n_classes, f, tuple(trees), init, hp.learning_rate, tuple(trace))
    trees = fit_forest_trees(X, y, n_classes, hp, variant, seed, n_jobs)
    return EnsembleModel(variant, n_classes, f, tuple(trees))


def tree_train(d, hp: Optional[TreeHyperparams] = None, seed: int = 0) -> EnsembleModel:
    """在 LabeledDataset 上训练单棵决策树"""
    return fit_variant('single', d.features, d.labels, d.n_classes, hp, seed)


def forest_train(d, hp: Optional[TreeHyperparams] = None, variant: str = 'bagging',
                 seed: int = 0, n_jobs: int = 1) -> EnsembleModel:
    """在 LabeledDataset 上训练 bagging / extra 森林"""
    if variant not in ('bagging', 'extra'):
        raise ConfigError(f"森林变体只能是 bagging 或 extra: {variant!r}")
    return fit_variant(variant, d.features, d.labels, d.n_classes, hp, seed, n_jobs)


def gbdt_train(d, hp: Optional[TreeHyperparams] = None, seed: int = 0, n_jobs: int = 1) -> EnsembleModel:
    """在 LabeledDataset 上训练梯度提升树"""
    return fit_variant('boosted', d.features, d.labels, d.n_classes, hp, seed, n_jobs)

