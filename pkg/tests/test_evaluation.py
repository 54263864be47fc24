"""
评估测试：指标、留出/交叉验证/零日协议与延迟基准
"""

import unittest

import numpy as np

from src.detect.persistence import dumps_pipeline
from src.evaluation.bench import STAGES, bench_latency
from src.evaluation.metrics import average_reports, compute_metrics, confusion_matrix, macro_f1
from src.evaluation.protocols import (
    check_zero_day_split,
    cross_validate,
    evaluate_pipeline,
    holdout_eval,
    predict_labels,
    zero_day_eval,
    zero_day_sweep,
)
from src.ingest.dataset import LabeledDataset
from src.utils.errors import ConfigError, DataError, InvariantError
from tests.helpers import blob_dataset, fast_config


def _binary_case():
    """TP=8, FN=2, FP=1, TN=9"""
    truth = np.array([1] * 10 + [0] * 10)
    predicted = np.array([1] * 8 + [0] * 2 + [1] * 1 + [0] * 9)
    return predicted, truth


class TestMetrics(unittest.TestCase):
    """指标测试"""

    def test_binary_metrics(self):
        """测试 TP=8 FN=2 FP=1 TN=9 -> Acc 0.85, DR 0.8, FAR 0.1, F1 16/19"""
        predicted, truth = _binary_case()
        report = compute_metrics(predicted, truth, {1}, ('normal', 'attack'))
        self.assertEqual((report.tp, report.fn, report.fp, report.tn), (8, 2, 1, 9))
        self.assertAlmostEqual(report.accuracy, 0.85)
        self.assertAlmostEqual(report.detection_rate, 0.8)
        self.assertAlmostEqual(report.false_alarm_rate, 0.1)
        self.assertAlmostEqual(report.f1, 16 / 19)
        self.assertAlmostEqual(report.f1, 0.842105, places=6)

    def test_multiclass_folding(self):
        """测试多类折叠：攻击类之间的混淆仍算检出"""
        truth = np.array([0, 0, 1, 1, 2, 2])
        predicted = np.array([1, 0, 1, 2, 2, 0])
        report = compute_metrics(predicted, truth, {0, 1}, ('DoS', 'Fuzzy', 'Normal'))
        self.assertEqual((report.tp, report.fn, report.fp, report.tn), (3, 1, 1, 1))
        self.assertEqual(report.confusion.tolist(), [[1, 1, 0], [0, 1, 1], [1, 0, 1]])
        self.assertAlmostEqual(report.macro_f1, 0.5)
        self.assertAlmostEqual(report.multiclass_accuracy, 0.5)

    def test_zero_denominators(self):
        """测试分母为 0 的比率记 0"""
        report = compute_metrics(np.array([0, 0]), np.array([0, 0]), {1}, ('normal', 'attack'))
        self.assertEqual(report.detection_rate, 0.0)
        self.assertEqual(report.f1, 0.0)
        self.assertEqual(report.false_alarm_rate, 0.0)

    def test_fuzzed_identities(self):
        """测试随机预测上 Acc/DR/FAR/F1 与直接计数的定义一致，分母为 0 时记 0"""
        rng = np.random.default_rng(17)
        for trial in range(40):
            k = int(rng.integers(2, 6))
            n = int(rng.integers(1, 60))
            truth = rng.integers(0, k, size=n)
            predicted = rng.integers(0, k, size=n)
            attacks = set(rng.choice(k, size=int(rng.integers(0, k + 1)), replace=False).tolist())
            with self.subTest(trial=trial):
                report = compute_metrics(predicted, truth, attacks, n_classes=k)
                pos_p = np.isin(predicted, list(attacks))
                pos_t = np.isin(truth, list(attacks))
                tp, tn = int(np.sum(pos_p & pos_t)), int(np.sum(~pos_p & ~pos_t))
                fp, fn = int(np.sum(pos_p & ~pos_t)), int(np.sum(~pos_p & pos_t))
                self.assertEqual((report.tp, report.tn, report.fp, report.fn), (tp, tn, fp, fn))
                self.assertEqual(tp + tn + fp + fn, n)
                self.assertAlmostEqual(report.accuracy, (tp + tn) / n)
                self.assertAlmostEqual(report.detection_rate, tp / (tp + fn) if tp + fn else 0.0)
                self.assertAlmostEqual(report.false_alarm_rate, fp / (fp + tn) if fp + tn else 0.0)
                self.assertAlmostEqual(report.f1, 2 * tp / (2 * tp + fp + fn) if 2 * tp + fp + fn else 0.0)
                self.assertEqual(int(report.confusion.sum()), n)
                self.assertAlmostEqual(report.macro_f1, macro_f1(predicted, truth, k))

    def test_invalid_input(self):
        """测试空输入、长度不一致与越界下标"""
        with self.assertRaises(DataError):
            compute_metrics(np.array([], dtype=int), np.array([], dtype=int), {1})
        with self.assertRaises(DataError):
            compute_metrics(np.array([0, 1]), np.array([0]), {1})
        with self.assertRaises(DataError):
            compute_metrics(np.array([0, 3]), np.array([0, 1]), {1}, ('a', 'b'))

    def test_confusion_and_macro_f1(self):
        """测试混淆矩阵的行列方向与宏平均"""
        cm = confusion_matrix(np.array([1, 1]), np.array([0, 1]), 2)
        self.assertEqual(cm.tolist(), [[0, 1], [0, 1]])
        self.assertAlmostEqual(macro_f1(np.array([1, 1]), np.array([0, 1]), 3), (0.0 + 2 / 3) / 2)

    def test_average_reports(self):
        """测试多折合并：混淆矩阵累加，时间取平均"""
        predicted, truth = _binary_case()
        a = compute_metrics(predicted, truth, {1}, ('normal', 'attack'))
        b = compute_metrics(truth, truth, {1}, ('normal', 'attack'))
        merged = average_reports([a, b])
        self.assertEqual(merged.n, 40)
        self.assertEqual((merged.tp, merged.fn, merged.fp, merged.tn), (18, 2, 1, 19))
        self.assertAlmostEqual(merged.extras['fold_accuracy_mean'], (0.85 + 1.0) / 2)
        with self.assertRaises(DataError):
            average_reports([])

    def test_report_rows(self):
        """测试报告导出为表格行"""
        predicted, truth = _binary_case()
        report = compute_metrics(predicted, truth, {1}, ('normal', 'attack'))
        self.assertEqual(report.summary()['accuracy'], report.accuracy)
        self.assertEqual(len(report.to_rows()), 3)


class TestProtocols(unittest.TestCase):
    """验证协议测试"""

    @classmethod
    def setUpClass(cls):
        cls.cfg = fast_config()
        cls.d = blob_dataset()
        cls.model, cls.report = holdout_eval(cls.d, cls.cfg)

    def test_holdout(self):
        """测试 70/30 留出评估"""
        self.assertEqual(self.report.n, 72)
        self.assertEqual(self.report.class_names, ('DoS', 'Fuzzy', 'Normal', 'UnknownAttack'))
        self.assertGreater(self.report.accuracy, 0.9)
        self.assertGreater(self.report.train_time, 0.0)

    def test_predict_labels_remaps_registry(self):
        """测试按评估数据的注册表重新映射类别"""
        test = blob_dataset({'Normal': 10, 'DoS': 10, 'Fuzzy': 10}, seed=3)
        signature = predict_labels(self.model, test.features, test.class_names, scope='signature')
        self.assertTrue(np.all(signature < 3))
        with self.assertRaises(DataError):
            predict_labels(self.model, test.features, ('DoS', 'Normal'))
        with self.assertRaises(ConfigError):
            predict_labels(self.model, test.features, test.class_names, scope='anomaly')
        report = evaluate_pipeline(self.model, test, scope='signature')
        self.assertEqual(report.n, 30)

    def test_cross_validate(self):
        """测试 3 折交叉验证的预测恰好覆盖训练集一次"""
        report = cross_validate(self.d, self.cfg, folds=3, scope='signature')
        self.assertEqual(int(report.confusion.sum()), self.d.n_samples)
        self.assertEqual(report.extras['folds'], 3.0)
        self.assertGreater(report.accuracy, 0.9)

    def test_cross_validate_reduces_folds(self):
        """测试最小类别样本数小于折数时减少折数"""
        d = blob_dataset({'Normal': 20, 'DoS': 4, 'Fuzzy': 10})
        report = cross_validate(d, self.cfg, folds=10, scope='signature')
        self.assertEqual(report.extras['folds'], 4.0)
        self.assertEqual(int(report.confusion.sum()), 34)

    def test_zero_day(self):
        """测试留出 Fuzzy：验证集 60 + 60 行，训练集 120 行"""
        result = zero_day_eval(self.d, 'Fuzzy', self.cfg)
        self.assertEqual(result.attack_class, 'Fuzzy')
        self.assertEqual(result.validation_size, 120)
        self.assertEqual(result.train_size, 120)
        self.assertEqual(result.full.n, 120)
        self.assertEqual(result.full.tp + result.full.fn, 60)
        self.assertEqual(result.ablation.n, 120)

    def test_zero_day_leakage_guard(self):
        """测试零日划分的防泄漏断言：训练集含留出类别或与验证行相交时报错"""
        fuzzy = self.d.class_index('Fuzzy')
        held_out = self.d.labels == fuzzy
        clean = self.d.without_class('Fuzzy')
        train_rows = np.flatnonzero(~held_out)
        validation_rows = np.flatnonzero(held_out)
        check_zero_day_split(clean, 'Fuzzy', train_rows, validation_rows)
        with self.assertRaises(InvariantError):
            check_zero_day_split(self.d, 'Fuzzy', train_rows, validation_rows)
        with self.assertRaises(InvariantError):
            check_zero_day_split(clean, 'Fuzzy', train_rows, np.append(validation_rows, train_rows[0]))

    def test_zero_day_invalid_class(self):
        """测试正常类、未知类与没有样本的类别"""
        with self.assertRaises(ConfigError):
            zero_day_eval(self.d, 'Normal', self.cfg)
        with self.assertRaises(DataError):
            zero_day_eval(self.d, 'Spoofing', self.cfg)
        empty = self.d.subset(np.flatnonzero(self.d.labels != self.d.class_index('Fuzzy')))
        with self.assertRaises(DataError):
            zero_day_eval(empty, 'Fuzzy', self.cfg)

    def test_zero_day_sweep_skips_empty(self):
        """测试依次留出时跳过没有样本的攻击类"""
        base = blob_dataset({'Normal': 60, 'DoS': 30, 'Fuzzy': 30})
        d = LabeledDataset(base.features, base.labels, base.feature_names,
                           base.class_names + ('Spoofing',), base.positive_classes | {3})
        results = zero_day_sweep(d, self.cfg.with_overrides(**{'signature.tune': False}))
        self.assertEqual(list(results), ['DoS', 'Fuzzy'])
        self.assertEqual(results['DoS'].validation_size, 60)

    def test_bench(self):
        """测试延迟基准：总耗时等于各阶段之和"""
        X = self.d.features[:10]
        report = bench_latency(self.model, X, warmup=2, repeats=2)
        self.assertEqual(report.rows, 10)
        self.assertEqual(report.repeats, 2)
        self.assertAlmostEqual(report.total_mean, sum(report.stage_mean[s] for s in STAGES), places=9)
        self.assertEqual(report.model_bytes, len(dumps_pipeline(self.model)))
        self.assertTrue(all(v >= 0.0 for v in report.stage_mean.values()))
        self.assertEqual(len(report.to_rows()), len(STAGES) + 2)


if __name__ == '__main__':
    unittest.main()
