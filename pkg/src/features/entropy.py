"""
信息论度量
分箱离散化、熵、信息增益与对称不确定性
"""

from dataclasses import dataclass

import numpy as np

from src.utils.errors import ConfigError, DataError


@dataclass(frozen=True)
class BinningRule:
    """连续特征离散化规则：取值种类不超过 bins 的列直接使用"""

    bins: int = 20
    strategy: str = 'quantile'

    def __post_init__(self):
        if self.bins < 2:
            raise ConfigError(f"bins 必须 >= 2: {self.bins}")
        if self.strategy != 'quantile':
            raise ConfigError(f"不支持的分箱策略: {self.strategy}")


DEFAULT_BINNING = BinningRule()


def discretize(x: np.ndarray, rule: BinningRule = DEFAULT_BINNING) -> np.ndarray:
    """把一列映射为整数箱号"""
    x = np.asarray(x)
    values = np.unique(x)
    if len(values) <= rule.bins:
        return np.searchsorted(values, x).astype(np.int64)
    edges = np.unique(np.quantile(x.astype(np.float64), np.linspace(0.0, 1.0, rule.bins + 1)[1:-1]))
    return np.searchsorted(edges, x, side='right').astype(np.int64)


def _entropy_from_counts(counts: np.ndarray) -> float:
    # 计数排序后求和，结果与输入顺序无关
    counts = np.sort(counts[counts > 0])
    n = counts.sum()
    p = counts / n
    return float(-np.sum(p * np.log2(p)))


def entropy(codes: np.ndarray) -> float:
    """以 2 为底的香农熵"""
    codes = np.asarray(codes)
    if codes.size == 0:
        raise DataError("不能计算空序列的熵")
    _, counts = np.unique(codes, return_counts=True)
    return _entropy_from_counts(counts)


def joint_entropy(a: np.ndarray, b: np.ndarray) -> float:
    """两列离散值的联合熵"""
    a, b = np.asarray(a), np.asarray(b)
    if a.shape != b.shape:
        raise DataError(f"长度不一致: {a.shape} vs {b.shape}")
    _, counts = np.unique(np.column_stack([a, b]), axis=0, return_counts=True)
    return _entropy_from_counts(counts)


def mutual_information(a: np.ndarray, b: np.ndarray) -> float:
    """I(A;B) = H(A) + H(B) - H(A,B)，截断到 [0, min(H(A), H(B))]"""
    ha, hb = entropy(a), entropy(b)
    mi = ha + hb - joint_entropy(a, b)
    return float(min(max(mi, 0.0), ha, hb))


def information_gain(x: np.ndarray, y: np.ndarray, binning: BinningRule = DEFAULT_BINNING) -> float:
    """
    信息增益 IG(T|X) = H(T) - H(T|X)

    Args:
        x: 特征列（按 binning 离散化）
        y: 类别标签
        binning: 分箱规则
    """
    x, y = np.asarray(x), np.asarray(y)
    if len(x) != len(y) or len(x) == 0:
        raise DataError(f"特征与标签长度不一致或为空: {len(x)} vs {len(y)}")
    return mutual_information(discretize(x, binning), y)


def symmetrical_uncertainty(x1: np.ndarray, x2: np.ndarray, binning: BinningRule = DEFAULT_BINNING) -> float:
    """对称不确定性 SU = 2·I(X1;X2) / (H(X1) + H(X2))；两列都恒定时为 0"""
    x1, x2 = np.asarray(x1), np.asarray(x2)
    if len(x1) != len(x2):
        raise DataError(f"长度不一致: {len(x1)} vs {len(x2)}")
    return su_codes(discretize(x1, binning), discretize(x2, binning))


def su_codes(a: np.ndarray, b: np.ndarray) -> float:
    """已离散化两列的对称不确定性"""
    ha, hb = entropy(a), entropy(b)
    denom = ha + hb
    if denom <= 0:
        return 0.0
    mi = ha + hb - joint_entropy(a, b)
    return float(min(max(2.0 * mi / denom, 0.0), 1.0))
