"""
树学习器测试：单树、森林与提升树
"""

import unittest

import numpy as np

from src.learners.boosting import log_loss, prior_scores, softmax
from src.learners.ensemble import (
    EnsembleModel,
    check_variant,
    default_hyperparams,
    fit_variant,
    forest_train,
    gbdt_train,
    tree_train,
)
from src.learners.tree import Tree, TreeHyperparams, resolve_max_features
from src.utils.errors import ConfigError, DataError
from tests.helpers import blob_dataset


def _leaf(distribution) -> Tree:
    """只有一个叶子的树"""
    return Tree(
        feature=np.array([-1]),
        threshold=np.array([0.0]),
        left=np.array([-1]),
        right=np.array([-1]),
        value=np.array([distribution], dtype=np.float64),
        depth=np.array([0]),
        n_features=1,
    )


def _weighted_gini(y: np.ndarray, left: np.ndarray) -> float:
    total = 0.0
    for side in (y[left], y[~left]):
        p = np.bincount(side) / len(side)
        total += len(side) / len(y) * (1.0 - np.sum(p ** 2))
    return total


def _brute_force_best_gini(X: np.ndarray, y: np.ndarray) -> float:
    """逐个特征、逐个相邻取值中点计算加权 Gini 的最小值"""
    best = np.inf
    for j in range(X.shape[1]):
        values = np.unique(X[:, j])
        for lo, hi in zip(values[:-1], values[1:]):
            best = min(best, _weighted_gini(y, X[:, j] <= (lo + hi) / 2.0))
    return best


class TestSingleTree(unittest.TestCase):
    """单棵决策树测试"""

    def test_pure_single_class(self):
        """测试只有一个类别 -> 单个叶子，概率为 1"""
        X = np.arange(10, dtype=float)[:, None]
        model = fit_variant('single', X, np.zeros(10, dtype=np.int64), 1)
        tree = model.trees[0]
        self.assertEqual(tree.n_leaves, 1)
        self.assertTrue(tree.node(0).is_leaf)
        np.testing.assert_array_equal(model.predict_proba(X), np.ones((10, 1)))

    def test_xor(self):
        """测试两个二值特征的 XOR，深度 >= 2 时训练准确率 100%"""
        X = np.tile([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]], (5, 1))
        y = (X[:, 0] != X[:, 1]).astype(np.int64)
        model = fit_variant('single', X, y, 2, TreeHyperparams(max_depth=2, n_estimators=1))
        np.testing.assert_array_equal(model.predict(X), y)
        self.assertEqual(model.trees[0].n_leaves, 4)

    def test_depth_one_threshold(self):
        """测试深度 1 时取中点阈值"""
        X = np.array([[1.0], [2.0], [3.0], [10.0], [11.0], [12.0]])
        y = np.array([0, 0, 0, 1, 1, 1])
        model = fit_variant('single', X, y, 2, TreeHyperparams(max_depth=1, n_estimators=1))
        root = model.trees[0].node(0)
        self.assertEqual(root.feature, 0)
        self.assertEqual(root.threshold, 6.5)
        np.testing.assert_array_equal(model.predict(np.array([[6.5], [6.6]])), [0, 1])

    def test_root_split_matches_brute_force_gini(self):
        """测试深度 1 的根划分与穷举所有特征/中点阈值得到的最小加权 Gini 一致"""
        rng = np.random.default_rng(21)
        for trial in range(8):
            n = int(rng.integers(20, 201))
            X = np.round(rng.normal(size=(n, 3)), 1)
            y = ((X[:, 0] + rng.normal(0, 0.7, n) > 0).astype(np.int64)
                 + (X[:, 1] > 0.5).astype(np.int64))
            with self.subTest(trial=trial, n=n):
                model = fit_variant('single', X, y, 3, TreeHyperparams(max_depth=1, n_estimators=1))
                root = model.trees[0].node(0)
                self.assertFalse(root.is_leaf)
                got = _weighted_gini(y, X[:, root.feature] <= root.threshold)
                self.assertAlmostEqual(got, _brute_force_best_gini(X, y), places=12)

    def test_min_samples_leaf(self):
        """测试叶子样本数下限"""
        X = np.arange(8, dtype=float)[:, None]
        y = np.array([0, 1, 0, 0, 1, 1, 0, 1])
        model = fit_variant('single', X, y, 2, TreeHyperparams(min_samples_leaf=3, n_estimators=1))
        tree = model.trees[0]
        leaves = tree.apply(X)
        self.assertTrue(np.all(np.bincount(leaves)[np.unique(leaves)] >= 3))

    def test_max_leaf_nodes(self):
        """测试最优优先生长的叶子数上限"""
        d = blob_dataset()
        model = tree_train(d, TreeHyperparams(max_leaf_nodes=3, n_estimators=1))
        self.assertLessEqual(model.trees[0].n_leaves, 3)
        self.assertGreater(np.mean(model.predict(d.features) == d.labels), 0.9)

    def test_one_dimensional_input(self):
        """测试一维输入返回一维分布"""
        d = blob_dataset()
        model = tree_train(d)
        proba = model.predict_proba(d.features[0])
        self.assertEqual(proba.shape, (3,))
        self.assertAlmostEqual(float(proba.sum()), 1.0)

    def test_width_mismatch(self):
        """测试预测时宽度不匹配"""
        model = tree_train(blob_dataset())
        with self.assertRaises(DataError):
            model.predict(np.zeros((2, 3)))


class TestForest(unittest.TestCase):
    """森林测试"""

    def setUp(self):
        self.d = blob_dataset()

    def test_single_member_equals_tree(self):
        """测试 t=1、不放回、全部特征的 bagging 等同单棵树"""
        hp = TreeHyperparams(n_estimators=1, bootstrap=False, max_features=1.0)
        forest = fit_variant('bagging', self.d.features, self.d.labels, 3, hp, seed=4)
        tree = fit_variant('single', self.d.features, self.d.labels, 3, hp, seed=9)
        grid = np.random.default_rng(0).normal(0, 4, size=(200, 4))
        np.testing.assert_array_equal(forest.predict_proba(grid), tree.predict_proba(grid))

    def test_deterministic(self):
        """测试固定种子结果可复现，且与并行线程数无关"""
        hp = TreeHyperparams(n_estimators=6)
        a = forest_train(self.d, hp, 'extra', seed=3)
        b = forest_train(self.d, hp, 'extra', seed=3, n_jobs=2)
        grid = np.random.default_rng(1).normal(0, 4, size=(100, 4))
        np.testing.assert_array_equal(a.predict_proba(grid), b.predict_proba(grid))

    def test_extra_row_order_invariant(self):
        """测试打乱训练行顺序不改变 extra 森林的预测"""
        perm = np.random.default_rng(2).permutation(self.d.n_samples)
        hp = TreeHyperparams(n_estimators=5)
        a = fit_variant('extra', self.d.features, self.d.labels, 3, hp, seed=6)
        b = fit_variant('extra', self.d.features[perm], self.d.labels[perm], 3, hp, seed=6)
        grid = np.random.default_rng(3).normal(2, 4, size=(150, 4))
        np.testing.assert_array_equal(a.predict_proba(grid), b.predict_proba(grid))

    def test_mean_of_leaf_distributions(self):
        """测试多数投票：三棵树投 [1,1,0] -> 类别 1"""
        model = EnsembleModel('bagging', 2, 1, (_leaf([0.0, 1.0]), _leaf([0.0, 1.0]), _leaf([1.0, 0.0])))
        np.testing.assert_allclose(model.predict_proba(np.array([0.0])), [1 / 3, 2 / 3])
        self.assertEqual(int(model.predict(np.array([0.0]))), 1)

    def test_accuracy_on_blobs(self):
        """测试森林在分离良好的数据上的训练准确率"""
        model = forest_train(self.d, TreeHyperparams(n_estimators=10), 'bagging')
        self.assertGreater(np.mean(model.predict(self.d.features) == self.d.labels), 0.95)
        self.assertEqual(model.n_trees, 10)

    def test_forest_rejects_boosted(self):
        """测试森林入口只接受 bagging / extra"""
        with self.assertRaises(ConfigError):
            forest_train(self.d, variant='boosted')


class TestBoosting(unittest.TestCase):
    """梯度提升测试"""

    def test_softmax(self):
        """测试 softmax([0,0]) -> [0.5,0.5]"""
        np.testing.assert_allclose(softmax(np.array([0.0, 0.0])), [0.5, 0.5])
        np.testing.assert_allclose(softmax(np.array([[1000.0, 1000.0]])), [[0.5, 0.5]])

    def test_train_loss_decreasing(self):
        """测试二分类上训练 log-loss 严格下降"""
        rng = np.random.default_rng(0)
        X = np.vstack([rng.normal(0, 1, (40, 2)), rng.normal(1.5, 1, (40, 2))])
        y = np.array([0] * 40 + [1] * 40)
        model = fit_variant('boosted', X, y, 2, TreeHyperparams(max_depth=3, n_estimators=15, learning_rate=0.1))
        trace = np.asarray(model.train_loss_trace)
        self.assertEqual(len(trace), 15)
        self.assertTrue(np.all(np.diff(trace) < 0))
        self.assertLess(trace[0], log_loss(np.tile(prior_scores(y, 2), (80, 1)), y))
        self.assertEqual(model.n_trees, 30)

    def test_row_order_invariant(self):
        """测试打乱训练行顺序不改变提升树的预测"""
        rng = np.random.default_rng(8)
        X = rng.normal(size=(90, 3))
        y = (X[:, 0] > 0).astype(np.int64) + (X[:, 1] > 0.8).astype(np.int64)
        perm = rng.permutation(90)
        hp = TreeHyperparams(max_depth=3, n_estimators=8)
        a = fit_variant('boosted', X, y, 3, hp, seed=1)
        b = fit_variant('boosted', X[perm], y[perm], 3, hp, seed=1)
        grid = rng.normal(size=(120, 3))
        np.testing.assert_allclose(a.predict_proba(grid), b.predict_proba(grid), atol=1e-9)
        np.testing.assert_array_equal(a.predict(grid), b.predict(grid))
        np.testing.assert_allclose(a.train_loss_trace, b.train_loss_trace, rtol=1e-9)

    def test_single_class_constant_prior(self):
        """测试只有一个类别出现时不训练树，输出先验"""
        X = np.arange(6, dtype=float)[:, None]
        model = fit_variant('boosted', X, np.full(6, 1), 3)
        self.assertEqual(model.n_trees, 0)
        proba = model.predict_proba(X)
        np.testing.assert_allclose(proba[:, 1], 1.0, atol=1e-9)
        np.testing.assert_array_equal(model.predict(X), np.ones(6))

    def test_accuracy_on_blobs(self):
        """测试提升树在三类数据上的训练准确率"""
        d = blob_dataset()
        model = gbdt_train(d, TreeHyperparams(max_depth=3, n_estimators=10))
        self.assertGreater(np.mean(model.predict(d.features) == d.labels), 0.95)
        np.testing.assert_allclose(model.predict_proba(d.features).sum(axis=1), 1.0)


class TestHyperparams(unittest.TestCase):
    """超参数校验测试"""

    def test_invalid_values(self):
        """测试非法超参数"""
        with self.assertRaises(ConfigError):
            TreeHyperparams(learning_rate=0.0)
        with self.assertRaises(ConfigError):
            TreeHyperparams(max_depth=0)
        with self.assertRaises(ConfigError):
            TreeHyperparams(min_samples_split=1)
        with self.assertRaises(ConfigError):
            check_variant('svm')

    def test_updated_ignores_unknown(self):
        """测试 updated 忽略不认识的键"""
        hp = default_hyperparams('boosted').updated(max_depth=4, criterion='gini')
        self.assertEqual(hp.max_depth, 4)
        self.assertEqual(hp.learning_rate, 0.1)

    def test_resolve_max_features(self):
        """测试 max_features 的几种写法"""
        self.assertEqual(resolve_max_features(None, 16, 'sqrt'), 4)
        self.assertEqual(resolve_max_features(0.5, 16), 8)
        self.assertEqual(resolve_max_features(40, 16), 16)
        self.assertEqual(resolve_max_features('log2', 16), 4)
        with self.assertRaises(ConfigError):
            resolve_max_features('half', 16)

    def test_invalid_labels(self):
        """测试标签超出类别数"""
        with self.assertRaises(DataError):
            fit_variant('single', np.zeros((3, 1)), np.array([0, 1, 2]), 2)


if __name__ == '__main__':
    unittest.main()
