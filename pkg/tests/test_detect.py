"""
检测层测试：簇标注、偏置分类器路由、stacking 元特征、完整流水线与持久化
"""

import shutil
import struct
import tempfile
import unittest
from pathlib import Path

import numpy as np

from src.detect.anomaly import (
    AnomalyModel,
    ClusterLabelModel,
    cluster_assign,
    cluster_assign_batch,
    fit_biased_classifiers,
    label_clusters,
)
from src.detect.persistence import MAGIC, decode_value, dumps_pipeline, encode_value, load_pipeline, loads_pipeline, save_pipeline
from src.detect.pipeline import VerdictKind, detect, detect_arrays, detect_batch, train_pipeline, verdict_labels
from src.detect.signature import best_variant, build_meta_features, effective_folds
from src.evaluation.protocols import evaluate_pipeline
from src.ingest.splitter import stratified_kfold
from src.learners.ensemble import VARIANTS, fit_variant
from src.learners.tree import TreeHyperparams
from src.preprocess.kmeans import KMeansModel
from src.utils.errors import DataError, InvariantError
from tests.helpers import blob_dataset, fast_config


def _two_cluster_model(p_star: float = 0.9) -> ClusterLabelModel:
    kmeans = KMeansModel(np.array([[0.0], [10.0]]), 'euclidean', 0.0, 1)
    return ClusterLabelModel(kmeans, np.array([0, 1]), np.array([0.99, 0.6]), p_star)


class TestClusterLabels(unittest.TestCase):
    """簇标注测试"""

    def test_majority_and_purity(self):
        """测试 9 个攻击 + 1 个正常 -> 标为 attack，纯度 0.9"""
        clusters = np.zeros(10, dtype=np.int64)
        y = np.array([1] * 9 + [0])
        labels, purity = label_clusters(clusters, y, 1)
        self.assertEqual(labels.tolist(), [1])
        self.assertAlmostEqual(purity[0], 0.9)

    def test_empty_cluster_and_tie(self):
        """测试空簇标为 normal、纯度 0.5；平票标为 attack"""
        clusters = np.array([0, 0])
        labels, purity = label_clusters(clusters, np.array([0, 1]), 2)
        self.assertEqual(labels.tolist(), [1, 0])
        self.assertEqual(purity.tolist(), [0.5, 0.5])

    def test_invalid_models(self):
        """测试非法 p_star 与纯度"""
        kmeans = KMeansModel(np.array([[0.0], [10.0]]), 'euclidean', 0.0, 1)
        with self.assertRaises(DataError):
            ClusterLabelModel(kmeans, np.array([0, 1]), np.array([0.9, 0.9]), 0.5)
        with self.assertRaises(InvariantError):
            ClusterLabelModel(kmeans, np.array([0, 1]), np.array([0.9, 0.4]))
        with self.assertRaises(InvariantError):
            ClusterLabelModel(kmeans, np.array([0]), np.array([0.9]))

    def test_cluster_assign(self):
        """测试最近质心分配，一维接口拒绝二维输入"""
        clm = _two_cluster_model()
        result = cluster_assign(clm, np.array([8.0]))
        self.assertEqual((result.cluster, result.label, result.purity), (1, 1, 0.6))
        clusters, labels, _ = cluster_assign_batch(clm, np.array([[1.0], [5.0], [7.0]]))
        # 5.0 与两个质心等距，取下标小的簇
        self.assertEqual(clusters.tolist(), [0, 0, 1])
        with self.assertRaises(DataError):
            cluster_assign(clm, np.array([[8.0]]))
        with self.assertRaises(DataError):
            cluster_assign_batch(clm, np.zeros((1, 2)))


class TestBiasedRouting(unittest.TestCase):
    """偏置分类器路由测试"""

    def setUp(self):
        self.clm = _two_cluster_model()
        b2 = fit_variant('single', np.array([[9.0], [9.5], [10.5], [11.0]]), np.array([0, 0, 1, 1]), 2)
        self.model = AnomalyModel(self.clm, None, b2, 'single')

    def test_low_purity_attack_cluster_routed_to_b2(self):
        """测试落入纯度 0.6 的攻击簇 -> 交给 B2，B2 判为 normal"""
        decision = self.model.classify(np.array([[9.9]]))
        self.assertEqual(decision.cluster.tolist(), [1])
        self.assertEqual(decision.label.tolist(), [0])
        self.assertTrue(decision.routed[0])
        self.assertEqual(decision.confidence[0], 1.0)

    def test_ablation_uses_cluster_label(self):
        """测试关闭偏置分类器时直接采用簇标签"""
        decision = self.model.classify(np.array([[9.9]]), use_biased=False)
        self.assertEqual(decision.label.tolist(), [1])
        self.assertFalse(decision.routed[0])
        self.assertAlmostEqual(decision.confidence[0], 0.6)

    def test_confident_cluster_not_routed(self):
        """测试高纯度簇直接采用簇标签；缺少的偏置分类器不做路由"""
        decision = self.model.classify(np.array([[0.5]]))
        self.assertEqual(decision.label.tolist(), [0])
        self.assertFalse(decision.routed[0])

    def test_biased_variant_must_match(self):
        """测试偏置分类器必须使用最优基学习器的算法"""
        b2 = fit_variant('boosted', np.array([[9.0], [11.0]]), np.array([0, 1]), 2,
                         TreeHyperparams(n_estimators=2))
        with self.assertRaises(InvariantError):
            AnomalyModel(self.clm, None, b2, 'single')

    def test_fit_biased_classifiers(self):
        """测试 B1 用漏报训练，B2 用误报训练"""
        Z = np.array([[0.0], [0.2], [0.4], [10.0], [10.2], [9.8]])
        y = np.array([0, 0, 1, 1, 1, 0])
        clm = ClusterLabelModel(KMeansModel(np.array([[0.0], [10.0]]), 'euclidean', 0.0, 1),
                                np.array([0, 1]), np.array([2 / 3, 2 / 3]), 0.9)
        b1, b2 = fit_biased_classifiers(clm, Z, y, 'single')
        self.assertIsNotNone(b1)
        self.assertIsNotNone(b2)
        self.assertEqual(int(b1.predict(np.array([0.4]))), 1)
        self.assertEqual(int(b2.predict(np.array([9.8]))), 0)
        clean = np.array([0, 0, 0, 1, 1, 1])
        self.assertEqual(fit_biased_classifiers(clm, Z, clean, 'single'), (None, None))


class TestMetaFeatures(unittest.TestCase):
    """stacking 元特征测试"""

    def setUp(self):
        self.d = blob_dataset({'Normal': 30, 'DoS': 15, 'Fuzzy': 15}, spread=1.5)
        self.hp = {
            'single': TreeHyperparams(max_depth=4, n_estimators=1),
            'bagging': TreeHyperparams(n_estimators=4),
            'extra': TreeHyperparams(n_estimators=4),
            'boosted': TreeHyperparams(max_depth=2, n_estimators=3),
        }

    def test_out_of_fold(self):
        """测试每行元特征等于不含该行的折模型的预测"""
        X, y = self.d.features, self.d.labels
        fold_of = stratified_kfold(y, 3, seed=0)
        meta = build_meta_features(X, y, 3, self.hp, fold_of, seed=5)
        self.assertEqual(meta.matrix.shape, (60, len(VARIANTS)))
        for f in range(3):
            test = fold_of == f
            for v, variant in enumerate(VARIANTS):
                model = fit_variant(variant, X[~test], y[~test], 3, self.hp[variant], 5 + f)
                np.testing.assert_array_equal(meta.matrix[test, v], model.predict(X[test]))
        self.assertEqual(set(meta.base_scores), set(VARIANTS))

    def test_proba_scheme(self):
        """测试概率方案每个基学习器 C 列"""
        fold_of = stratified_kfold(self.d.labels, 3, seed=0)
        meta = build_meta_features(self.d.features, self.d.labels, 3, self.hp, fold_of, scheme='proba')
        self.assertEqual(meta.matrix.shape, (60, 3 * len(VARIANTS)))
        np.testing.assert_allclose(meta.matrix[:, :3].sum(axis=1), 1.0)

    def test_best_variant_tie_order(self):
        """测试平票按 single, bagging, extra, boosted 顺序"""
        self.assertEqual(best_variant({'single': 0.9, 'bagging': 0.9, 'extra': 0.8, 'boosted': 0.7}), 'single')
        self.assertEqual(best_variant({'single': 0.5, 'bagging': 0.6, 'extra': 0.8, 'boosted': 0.8}), 'extra')

    def test_effective_folds(self):
        """测试折数不超过最小类别样本数"""
        y = np.array([0] * 10 + [1] * 3)
        self.assertEqual(effective_folds(y, 10), 3)
        self.assertEqual(effective_folds(np.array([0] * 10 + [1]), 10), 2)


class TestPipeline(unittest.TestCase):
    """完整流水线测试"""

    @classmethod
    def setUpClass(cls):
        cls.cfg = fast_config()
        cls.train = blob_dataset(seed=0)
        cls.test = blob_dataset({'Normal': 40, 'DoS': 20, 'Fuzzy': 20}, seed=1)
        cls.model = train_pipeline(cls.train, cls.cfg)

    def setUp(self):
        self.test_dir = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.test_dir)

    def test_model_structure(self):
        """测试训练结果的组成"""
        self.assertEqual(self.model.class_names, ('DoS', 'Fuzzy', 'Normal'))
        self.assertEqual(self.model.positive_classes, frozenset({0, 1}))
        self.assertIsNotNone(self.model.kpca)
        self.assertIsNotNone(self.model.anomaly)
        self.assertEqual(self.model.anomaly.best_base, self.model.stack.best_base)
        # 重复列被 FCBF 去掉
        self.assertNotIn('f0_copy', self.model.selection.selected_names)

    def test_detection_accuracy(self):
        """测试新样本上的检测结果"""
        batch = detect_arrays(self.model, self.test.features)
        predicted = verdict_labels(self.model, batch)
        self.assertGreater(np.mean(predicted == self.test.labels), 0.9)

    def test_verdict_tiers(self):
        """测试判定类型与层轨迹一致"""
        for verdict in detect_batch(self.model, self.test.features):
            if verdict.kind == VerdictKind.KNOWN:
                self.assertEqual(verdict.tier_trace, (1,))
                self.assertIn(verdict.class_name, ('DoS', 'Fuzzy'))
            else:
                self.assertIsNone(verdict.class_name)
                self.assertIn(verdict.tier_trace, ((1, 3), (1, 3, 4)))
            self.assertTrue(0.0 <= verdict.confidence <= 1.0)

    def test_routing_is_total(self):
        """测试每行恰好一个判定：签名层未识别的行按簇纯度与 p_star 决定是否进入第 4 层"""
        X = np.vstack([self.test.features, np.random.default_rng(5).normal(0.0, 4.0, size=(60, 4))])
        batch = detect_arrays(self.model, X)
        self.assertEqual(len(batch), len(X))
        self.assertTrue(np.all(np.isin(batch.kind, [0, 1, 2])))
        self.assertTrue(np.all(np.isin(batch.depth, [1, 2, 3])))
        np.testing.assert_array_equal(batch.kind == 0, batch.depth == 1)

        suspicious = np.flatnonzero(batch.kind != 0)
        anomaly = self.model.anomaly
        Z = self.model.kpca.transform(self.model.signature_view(X[suspicious]))
        _, labels, purity = cluster_assign_batch(anomaly.clusters, Z)
        has_model = np.where(labels == 0, anomaly.b1 is not None, anomaly.b2 is not None)
        expect_routed = (purity < anomaly.p_star) & has_model
        np.testing.assert_array_equal(batch.depth[suspicious] == 3, expect_routed)
        kept = ~expect_routed
        np.testing.assert_array_equal(batch.kind[suspicious][kept], np.where(labels[kept] == 1, 1, 2))

    def test_binary_mode(self):
        """测试签名层二分类模式：注册表为 normal/attack，Known 判定的类别为 attack"""
        cfg = self.cfg.with_overrides(**{'signature.mode': 'binary'})
        model = train_pipeline(self.train, cfg)
        self.assertTrue(model.binary_mode)
        self.assertFalse(self.model.binary_mode)
        self.assertEqual(model.class_names, ('normal', 'attack'))
        self.assertEqual(model.stack.n_classes, 2)
        verdict = detect(model, np.array([6.0, 0.0, 0.0, 6.0]))
        self.assertEqual(verdict.kind, VerdictKind.KNOWN)
        self.assertEqual(verdict.class_name, 'attack')
        report = evaluate_pipeline(model, self.test, scope='signature')
        self.assertEqual(report.class_names, ('normal', 'attack', 'UnknownAttack'))
        self.assertGreater(report.accuracy, 0.9)
        self.assertTrue(loads_pipeline(dumps_pipeline(model)).binary_mode)

    def test_single_row_detect(self):
        """测试单行检测，非有限值用训练中位数修复"""
        verdict = detect(self.model, np.array([6.0, 0.0, 0.0, 6.0]))
        self.assertEqual(verdict.kind, VerdictKind.KNOWN)
        self.assertEqual(verdict.class_name, 'DoS')
        self.assertTrue(verdict.is_attack)
        repaired = detect(self.model, np.array([6.0, 0.0, np.nan, 6.0]))
        self.assertEqual(repaired.class_name, 'DoS')
        with self.assertRaises(DataError):
            detect(self.model, np.zeros((1, 4)))

    def test_width_mismatch(self):
        """测试输入宽度不匹配"""
        with self.assertRaises(DataError):
            detect_batch(self.model, np.zeros((2, 3)))

    def test_ablation_never_routes(self):
        """测试只用 CL-k-means 时不会进入第 4 层"""
        batch = detect_arrays(self.model, self.test.features, use_biased=False)
        self.assertTrue(np.all(batch.depth <= 2))

    def test_persistence_round_trip(self):
        """测试保存后重新加载：字节相同，检测结果相同"""
        data = dumps_pipeline(self.model)
        self.assertTrue(data.startswith(MAGIC))
        restored = loads_pipeline(data)
        self.assertEqual(dumps_pipeline(restored), data)
        a = detect_arrays(self.model, self.test.features)
        b = detect_arrays(restored, self.test.features)
        np.testing.assert_array_equal(a.kind, b.kind)
        np.testing.assert_array_equal(a.class_index, b.class_index)
        np.testing.assert_array_equal(a.confidence, b.confidence)

        path = save_pipeline(self.model, Path(self.test_dir) / 'models' / 'ids.bin')
        self.assertEqual(path.read_bytes(), data)
        self.assertEqual(dumps_pipeline(load_pipeline(path)), data)

    def test_corrupt_files(self):
        """测试版本不符、截断、魔数错误与多余字节"""
        data = dumps_pipeline(self.model)
        offset = len(MAGIC)
        wrong_version = data[:offset] + struct.pack('<I', 99) + data[offset + 4:]
        for bad in (wrong_version, data[:-5], b'NOTMODEL' + data[offset:], data + b'\x00'):
            with self.assertRaises(DataError):
                loads_pipeline(bad)
        with self.assertRaises(DataError):
            load_pipeline(Path(self.test_dir) / 'missing.bin')

    def test_signature_only(self):
        """测试不训练异常检测层时非攻击判定都是 Normal"""
        model = train_pipeline(self.train, self.cfg, with_anomaly=False)
        self.assertIsNone(model.anomaly)
        batch = detect_arrays(model, self.test.features)
        self.assertTrue(np.all(batch.depth == 1))
        self.assertTrue(np.all(np.isin(batch.kind, [0, 2])))


class TestValueCodec(unittest.TestCase):
    """模型值编码测试"""

    def test_nested_values(self):
        """测试嵌套结构与数组编码"""
        value = {'a': [1, 2.5, None, True], 'b': np.arange(6).reshape(2, 3), 'c': 'ñ'}
        decoded = decode_value(encode_value(value))
        self.assertEqual(decoded['a'], [1, 2.5, None, True])
        np.testing.assert_array_equal(decoded['b'], value['b'])
        self.assertEqual(decoded['c'], 'ñ')

    def test_unsupported_type(self):
        """测试无法序列化的类型"""
        with self.assertRaises(DataError):
            encode_value({1, 2})


if __name__ == '__main__':
    unittest.main()
