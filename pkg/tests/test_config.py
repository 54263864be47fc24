"""
配置测试
"""

import os
import shutil
import tempfile
import unittest
from pathlib import Path

import numpy as np

from src.utils.config import PipelineConfig, load_pipeline_config, parse_config_text
from src.utils.errors import ConfigError, DataError, IdsError, InvariantError, check_width
from tests.helpers import FAST_CONFIG_TEXT


class TestPipelineConfig(unittest.TestCase):
    """流水线配置测试"""

    def setUp(self):
        self.test_dir = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.test_dir)

    def test_defaults(self):
        """测试默认配置"""
        cfg = PipelineConfig()
        self.assertEqual(cfg.anomaly.p_star, 0.933)
        self.assertEqual(cfg.sampling.fraction, 0.1)
        self.assertEqual(cfg.features.alpha_ig, 0.9)
        self.assertEqual(cfg.evaluation.train_fraction, 0.7)
        self.assertEqual(cfg.anomaly.distances, ['euclidean', 'manhattan'])
        self.assertEqual(cfg.ingest.normal_labels, ['Normal', 'BENIGN'])
        self.assertEqual(cfg.signature.mode, 'multiclass')
        self.assertEqual(parse_config_text("signature.mode=binary").signature.mode, 'binary')

    def test_parse_text(self):
        """测试解析 section.key=value 文本，忽略注释与空行"""
        cfg = parse_config_text(FAST_CONFIG_TEXT)
        self.assertFalse(cfg.sampling.enabled)
        self.assertEqual(cfg.hpo.tpe_budget, 2)
        self.assertEqual(cfg.kpca.n_components, 3)
        self.assertEqual(cfg.signature.space['boosted'], {'n_estimators': 'int:5:8', 'max_depth': 'int:3:4'})

    def test_comma_list(self):
        """测试逗号分隔的列表"""
        cfg = parse_config_text("anomaly.distances = manhattan, euclidean\ningest.normal_labels=BENIGN")
        self.assertEqual(cfg.anomaly.distances, ['manhattan', 'euclidean'])
        self.assertEqual(cfg.ingest.normal_labels, ['BENIGN'])

    def test_invalid_lines(self):
        """测试缺少等号、空键与未知键"""
        with self.assertRaises(ConfigError):
            parse_config_text("seed 3")
        with self.assertRaises(ConfigError):
            parse_config_text("=3")
        with self.assertRaises(ConfigError):
            parse_config_text("anomaly.pstar=0.9")

    def test_invalid_values(self):
        """测试取值范围校验"""
        for line in ("anomaly.p_star=1.5", "sampling.fraction=0", "signature.meta_features=votes",
                     "evaluation.folds=1", "threads=0", "signature.mode=ternary"):
            with self.subTest(line=line):
                with self.assertRaises(ConfigError):
                    parse_config_text(line)

    def test_with_overrides(self):
        """测试扁平键覆盖，原对象不变"""
        cfg = PipelineConfig()
        updated = cfg.with_overrides(**{'anomaly.p_star': 0.95, 'seed': 7, 'signature.space.single.max_depth': 'int:2:4'})
        self.assertEqual(updated.anomaly.p_star, 0.95)
        self.assertEqual(updated.seed, 7)
        self.assertEqual(updated.signature.space['single']['max_depth'], 'int:2:4')
        self.assertEqual(cfg.anomaly.p_star, 0.933)
        with self.assertRaises(ConfigError):
            cfg.with_overrides(**{'anomaly.p_star': 0.2})

    def test_load_from_file(self):
        """测试从文件加载与文件不存在"""
        path = Path(self.test_dir) / 'pipeline.cfg'
        path.write_text("# 小规模\nseed=11\nkpca.kernel=poly\n", encoding='utf-8')
        cfg = load_pipeline_config(path)
        self.assertEqual(cfg.seed, 11)
        self.assertEqual(cfg.kpca.kernel, 'poly')
        with self.assertRaises(ConfigError):
            load_pipeline_config(os.path.join(self.test_dir, 'missing.cfg'))


class TestErrors(unittest.TestCase):
    """异常类型测试"""

    def test_exit_codes(self):
        """测试退出码与继承关系"""
        self.assertEqual(ConfigError.exit_code, 1)
        self.assertEqual(DataError.exit_code, 2)
        self.assertEqual(InvariantError.exit_code, 3)
        self.assertTrue(issubclass(DataError, IdsError))
        self.assertTrue(issubclass(ConfigError, ValueError))

    def test_check_width(self):
        """测试宽度校验"""
        check_width(np.zeros((2, 3)), 3)
        with self.assertRaises(DataError):
            check_width(np.zeros((2, 3)), 4)


if __name__ == '__main__':
    unittest.main()
