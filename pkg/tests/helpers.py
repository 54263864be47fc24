"""
测试辅助工具
小规模数据集与快速配置
"""

import numpy as np

from src.ingest.dataset import LabeledDataset, encode_labels
from src.utils.config import parse_config_text

# 小预算配置：关闭簇抽样，调参各只评估 1~2 次
FAST_CONFIG_TEXT = """
# 测试用快速配置
seed=0
sampling.enabled=false
signature.tune=true
signature.cv_folds=3
signature.space.bagging.n_estimators=int:5:8
signature.space.extra.n_estimators=int:5:8
signature.space.boosted.n_estimators=int:5:8
signature.space.boosted.max_depth=int:3:4
hpo.tpe_budget=2
hpo.gp_budget=3
hpo.n_init=1
kpca.n_components=3
kpca.max_rows=200
anomaly.budget=3
anomaly.k_min=2
anomaly.k_max=8
anomaly.minibatch_size=0
evaluation.folds=3
bench.warmup=2
bench.repeats=1
"""

FEATURE_NAMES = ('f0', 'f1', 'noise', 'f0_copy')

# 类别中心（前两维）
CENTERS = {
    'Normal': (0.0, 0.0),
    'DoS': (6.0, 0.0),
    'Fuzzy': (0.0, 6.0),
}


def fast_config():
    return parse_config_text(FAST_CONFIG_TEXT)


def blob_dataset(counts=None, seed: int = 0, spread: float = 0.5) -> LabeledDataset:
    """
    三类高斯团数据集

    注册表按字典序为 (DoS, Fuzzy, Normal)，第 4 列是第 1 列的副本。
    """
    counts = counts or {'Normal': 120, 'DoS': 60, 'Fuzzy': 60}
    rng = np.random.default_rng(seed)
    rows, names = [], []
    for name, n in counts.items():
        cx, cy = CENTERS[name]
        block = np.column_stack([
            rng.normal(cx, spread, n),
            rng.normal(cy, spread, n),
            rng.normal(0.0, 1.0, n),
        ])
        rows.append(block)
        names.extend([name] * n)
    X = np.vstack(rows)
    X = np.column_stack([X, X[:, 0]])
    order = rng.permutation(len(names))
    labels, class_names, positive = encode_labels(np.asarray(names)[order])
    return LabeledDataset(X[order], labels, FEATURE_NAMES, class_names, positive)
