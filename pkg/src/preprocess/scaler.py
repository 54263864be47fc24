"""
Z-score 标准化
"""

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from src.utils.errors import DataError, check_width


@dataclass(frozen=True, eq=False)
class ZScoreScaler:
    """按列标准化参数；stds 为总体标准差，0 表示恒定列"""

    means: np.ndarray
    stds: np.ndarray

    @classmethod
    def fit(cls, X: np.ndarray) -> 'ZScoreScaler':
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[0] == 0:
            raise DataError("标准化需要非空的二维矩阵")
        if not np.all(np.isfinite(X)):
            raise DataError("标准化输入含非有限值")
        # 极差为 0 的列按恒定列处理，浮点误差产生的微小 std 不参与缩放
        stds = np.where(np.ptp(X, axis=0) == 0, 0.0, X.std(axis=0))
        return cls(X.mean(axis=0), stds)

    @property
    def constant_columns(self) -> np.ndarray:
        return np.flatnonzero(self.stds == 0)

    def transform(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        check_width(X, len(self.means), "标准化")
        safe = np.where(self.stds > 0, self.stds, 1.0)
        out = (X - self.means) / safe
        out[..., self.stds == 0] = 0.0
        return out


def zscore_fit_apply(X: np.ndarray) -> Tuple[ZScoreScaler, np.ndarray]:
    """拟合并应用标准化"""
    scaler = ZScoreScaler.fit(X)
    return scaler, scaler.transform(X)


def zscore_apply(scaler: ZScoreScaler, X: np.ndarray) -> np.ndarray:
    """用已拟合的参数标准化新数据"""
    return scaler.transform(X)
