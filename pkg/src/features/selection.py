"""
特征选择
基于信息增益的累计重要性选择 + FCBF 冗余消除
"""

from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
from joblib import Parallel, delayed
from rich.console import Console

from src.features.entropy import DEFAULT_BINNING, BinningRule, discretize, information_gain, su_codes
from src.hpo.gp import bo_gp_optimize
from src.hpo.space import RealParam, SearchSpace
from src.utils.errors import ConfigError, DataError, check_width

console = Console(stderr=True)

IMPORTANCE_TOLERANCE = 1e-9


@dataclass(frozen=True, eq=False)
class FeatureSelection:
    """
    特征选择结果

    importances 归一化后和为 1；selected 按重要性降序排列。
    """

    importances: np.ndarray
    selected: Tuple[int, ...]
    feature_names: Tuple[str, ...]
    alpha_ig: float = 1.0
    alpha_su: Optional[float] = None

    def __post_init__(self):
        f = len(self.importances)
        if len(set(self.selected)) != len(self.selected):
            raise DataError("选择的特征下标重复")
        if any(i < 0 or i >= f for i in self.selected):
            raise DataError("选择的特征下标越界")
        if not self.selected:
            raise DataError("至少需要保留一个特征")

    @classmethod
    def all_features(cls, feature_names: Sequence[str]) -> 'FeatureSelection':
        f = len(feature_names)
        return cls(np.full(f, 1.0 / f), tuple(range(f)), tuple(feature_names))

    @property
    def n_selected(self) -> int:
        return len(self.selected)

    @property
    def selected_names(self) -> List[str]:
        return [self.feature_names[i] for i in self.selected]

    def apply(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X)
        check_width(X, len(self.importances), "特征选择")
        return X[..., list(self.selected)]


def ig_importances(d, binning: BinningRule = DEFAULT_BINNING, n_jobs: int = 1) -> np.ndarray:
    """每个特征的信息增益（未归一化）"""
    columns = range(d.n_features)
    if n_jobs == 1:
        gains = [information_gain(d.features[:, j], d.labels, binning) for j in columns]
    else:
        gains = Parallel(n_jobs=n_jobs, prefer='threads')(
            delayed(information_gain)(d.features[:, j], d.labels, binning) for j in columns
        )
    return np.asarray(gains, dtype=np.float64)


def ig_select(d, alpha_ig: float = 0.9, binning: BinningRule = DEFAULT_BINNING,
              n_jobs: int = 1) -> FeatureSelection:
    """
    按累计信息增益选择特征

    特征按归一化 IG 降序排列（平票取列下标小的），从头累加直到总重要性 >= alpha_ig。

    Args:
        d: LabeledDataset
        alpha_ig: 累计重要性阈值 (0, 1]
        binning: 分箱规则
        n_jobs: 并行线程数

    Returns:
        FeatureSelection: 选择结果
    """
    if not 0.0 < alpha_ig <= 1.0:
        raise ConfigError(f"alpha_ig 必须位于 (0,1]: {alpha_ig}")
    return select_by_importance(ig_importances(d, binning, n_jobs), alpha_ig, d.feature_names)


def select_by_importance(gains: np.ndarray, alpha_ig: float, feature_names: Sequence[str]) -> FeatureSelection:
    """由未归一化的信息增益做累计重要性选择"""
    total = gains.sum()
    if total <= 0:
        console.print("⚠️  所有特征的信息增益都为 0，保留全部特征", style="yellow")
        return replace(FeatureSelection.all_features(feature_names), alpha_ig=alpha_ig)

    importances = gains / total
    order = np.argsort(-importances, kind='stable')
    cumulative = np.cumsum(importances[order])
    stop = int(np.searchsorted(cumulative, alpha_ig - IMPORTANCE_TOLERANCE, side='left'))
    stop = min(stop, len(order) - 1)
    selected = tuple(int(j) for j in order[:stop + 1])
    console.print(f"✅ IG 选择: {len(selected)}/{len(gains)} 个特征 (alpha={alpha_ig})")
    return FeatureSelection(importances, selected, tuple(feature_names), alpha_ig)


def fcbf_filter(d, sel: FeatureSelection, alpha_su: float = 0.9,
                binning: BinningRule = DEFAULT_BINNING) -> FeatureSelection:
    """
    FCBF 冗余消除

    按重要性顺序依次取锚点，删除后续与锚点 SU > alpha_su 的特征，
    结果中任意两个保留特征的 SU 都 <= alpha_su。
    """
    if not 0.0 < alpha_su < 1.0:
        raise ConfigError(f"alpha_su 必须位于 (0,1): {alpha_su}")
    codes = {j: discretize(d.features[:, j], binning) for j in sel.selected}
    kept = list(sel.selected)
    i = 0
    while i < len(kept):
        anchor = kept[i]
        survivors = kept[:i + 1]
        for j in kept[i + 1:]:
            if su_codes(codes[anchor], codes[j]) > alpha_su:
                console.print(f"🔧 FCBF: 删除 {d.feature_names[j]!r} (与 {d.feature_names[anchor]!r} 冗余)",
                              style="dim")
            else:
                survivors.append(j)
        kept = survivors
        i += 1
    if len(kept) < len(sel.selected):
        console.print(f"✅ FCBF: {len(sel.selected)} -> {len(kept)} 个特征")
    return replace(sel, selected=tuple(kept), alpha_su=alpha_su)


def export_selection(sel: FeatureSelection, path: Union[str, Path]) -> Path:
    """导出选择的特征名（每行一个，按重要性排序）"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(''.join(f"{name}\n" for name in sel.selected_names), encoding='utf-8')
    return path


def tune_alpha_ig(
    d,
    evaluate: Callable[[FeatureSelection], float],
    budget: int = 10,
    seed: int = 0,
    binning: BinningRule = DEFAULT_BINNING,
    alpha_su: Optional[float] = None,
) -> FeatureSelection:
    """
    用 BO-GP 在 (0.5, 1.0] 上调 alpha_ig

    Args:
        d: LabeledDataset
        evaluate: 选择结果 -> 验证准确率（越大越好）
        budget: 评估次数
        seed: 随机种子
        binning: 分箱规则
        alpha_su: 非空时每个候选都经过 FCBF
    """
    gains = ig_importances(d, binning)

    def select(alpha: float) -> FeatureSelection:
        sel = select_by_importance(gains, alpha, d.feature_names)
        return fcbf_filter(d, sel, alpha_su, binning) if alpha_su is not None else sel

    def objective(assignment):
        return -evaluate(select(float(assignment['alpha_ig'])))

    space = SearchSpace([RealParam('alpha_ig', 0.5, 1.0)])
    best = bo_gp_optimize(objective, space, budget, seed, name='alpha_ig')
    return select(float(best.assignment['alpha_ig']))
