"""
签名检测层
四种树学习器经 BO-TPE 调参后做 stacking，元学习器取交叉验证最优的算法
"""

from dataclasses import dataclass
from typing import Dict, MutableMapping, Optional, Tuple

import numpy as np
from rich.console import Console

from src.evaluation.metrics import macro_f1
from src.hpo.space import SearchSpace, TrialLedger
from src.hpo.tpe import bo_tpe_optimize
from src.ingest.splitter import stratified_kfold
from src.learners.ensemble import VARIANTS, EnsembleModel, default_hyperparams, fit_variant
from src.learners.tree import TreeHyperparams
from src.utils.config import PipelineConfig
from src.utils.errors import DataError, IdsError, InvariantError, check_width

console = Console(stderr=True)

META_SCHEMES = ('labels', 'proba')

_FOREST_SPACE = {
    'n_estimators': 'int:10:100',
    'max_depth': 'int:5:50',
    'min_samples_split': 'int:2:11',
    'min_samples_leaf': 'int:1:11',
    'max_features': 'cat:sqrt|log2|all',
}

DEFAULT_SPACES: Dict[str, Dict[str, str]] = {
    'single': {
        'max_depth': 'int:5:50',
        'min_samples_split': 'int:2:11',
        'min_samples_leaf': 'int:1:11',
    },
    'bagging': dict(_FOREST_SPACE),
    'extra': dict(_FOREST_SPACE),
    'boosted': {
        'n_estimators': 'int:10:100',
        'max_depth': 'int:3:12',
        'learning_rate': 'real:0.01:0.9:log',
    },
}


def signature_space(variant: str, overrides: Optional[Dict[str, Dict[str, str]]] = None) -> SearchSpace:
    """变体的默认搜索空间，按配置 signature.space.<variant>.<param> 覆盖或追加"""
    spec = dict(DEFAULT_SPACES[variant])
    spec.update((overrides or {}).get(variant, {}))
    return SearchSpace.parse(spec)


def effective_folds(y: np.ndarray, requested: int) -> int:
    """折数不超过最小类别样本数；需要减少时给出警告"""
    counts = np.bincount(y)
    smallest = int(counts[counts > 0].min())
    folds = max(2, min(requested, smallest))
    if folds < requested:
        console.print(f"⚠️  最小类别只有 {smallest} 个样本, 交叉验证折数由 {requested} 降为 {folds}",
                      style="yellow")
    if len(y) < folds:
        raise DataError(f"样本数 {len(y)} 不足以做 {folds} 折交叉验证")
    return folds


def cv_macro_f1(variant: str, X: np.ndarray, y: np.ndarray, n_classes: int, hp: TreeHyperparams,
                fold_of: np.ndarray, seed: int = 0, n_jobs: int = 1) -> float:
    """按给定折划分计算平均 macro-F1"""
    scores = []
    for f in range(int(fold_of.max()) + 1):
        test = fold_of == f
        model = fit_variant(variant, X[~test], y[~test], n_classes, hp, seed + f, n_jobs)
        scores.append(macro_f1(model.predict(X[test]), y[test], n_classes))
    return float(np.mean(scores))


def tune_base(
    variant: str,
    X: np.ndarray,
    y: np.ndarray,
    n_classes: int,
    cfg: PipelineConfig,
    fold_of: np.ndarray,
    seed: int = 0,
    ledger: Optional[TrialLedger] = None,
) -> TreeHyperparams:
    """
    用 BO-TPE 调一个基学习器的超参数

    目标为交叉验证 macro-F1（取负后最小化）；调参失败时回退到默认超参数。
    """
    base = default_hyperparams(variant)

    def objective(assignment):
        hp = base.updated(**assignment)
        return -cv_macro_f1(variant, X, y, n_classes, hp, fold_of, seed, cfg.threads)

    try:
        space = signature_space(variant, cfg.signature.space)
        best = bo_tpe_optimize(
            objective, space, cfg.hpo.tpe_budget, seed, name=variant,
            n_init=cfg.hpo.n_init, gamma=cfg.hpo.gamma, n_candidates=cfg.hpo.tpe_candidates,
            width=cfg.hpo.width, ledger=ledger,
        )
        return base.updated(**best.assignment)
    except IdsError as e:
        console.print(f"⚠️  {variant} 调参失败, 使用默认超参数: {e}", style="yellow")
        return base


@dataclass(frozen=True, eq=False)
class MetaFeatures:
    """元特征矩阵及其折记录"""

    matrix: np.ndarray
    fold_of: np.ndarray
    base_scores: Dict[str, float]


def _meta_block(model: EnsembleModel, X: np.ndarray, scheme: str) -> np.ndarray:
    if scheme == 'labels':
        return model.predict(X).astype(np.float64)[:, None]
    return model.predict_proba(X)


def build_meta_features(
    X: np.ndarray,
    y: np.ndarray,
    n_classes: int,
    hyperparams: Dict[str, TreeHyperparams],
    fold_of: np.ndarray,
    seed: int = 0,
    scheme: str = 'labels',
    n_jobs: int = 1,
) -> MetaFeatures:
    """
    生成折外 (out-of-fold) 元特征

    第 i 行的元特征只来自没有用第 i 行训练的模型；每行恰好被填充一次。

    Args:
        X: 训练特征
        y: 训练标签
        n_classes: 类别数
        hyperparams: 各变体的超参数
        fold_of: 每行的折号
        seed: 随机种子
        scheme: labels（每个基学习器一列预测标签）或 proba（每个基学习器 C 列概率）
        n_jobs: 并行线程数

    Returns:
        MetaFeatures: 元特征矩阵、折记录与各基学习器的折外 macro-F1
    """
    width = 1 if scheme == 'labels' else n_classes
    matrix = np.zeros((len(y), width * len(VARIANTS)), dtype=np.float64)
    oof_labels = np.zeros((len(VARIANTS), len(y)), dtype=np.int64)
    filled = np.zeros(len(y), dtype=np.int64)
    for f in range(int(fold_of.max()) + 1):
        test = np.flatnonzero(fold_of == f)
        train = np.flatnonzero(fold_of != f)
        if np.intersect1d(train, test).size:
            raise InvariantError(f"第 {f} 折的训练行与预测行重叠")
        for v, variant in enumerate(VARIANTS):
            model = fit_variant(variant, X[train], y[train], n_classes, hyperparams[variant], seed + f, n_jobs)
            matrix[test, v * width:(v + 1) * width] = _meta_block(model, X[test], scheme)
            oof_labels[v, test] = model.predict(X[test])
        filled[test] += 1
    if not np.all(filled == 1):
        raise InvariantError("元特征行没有恰好被填充一次")
    scores = {variant: macro_f1(oof_labels[v], y, n_classes) for v, variant in enumerate(VARIANTS)}
    return MetaFeatures(matrix, fold_of, scores)


def best_variant(scores: Dict[str, float]) -> str:
    """折外 macro-F1 最高的变体，平票按 single, bagging, extra, boosted 的顺序"""
    return max(VARIANTS, key=lambda v: (scores[v], -VARIANTS.index(v)))


@dataclass(frozen=True, eq=False)
class StackedModel:
    """签名检测层：四个基学习器 + 元学习器"""

    bases: Tuple[EnsembleModel, ...]
    meta: EnsembleModel
    best_base: str
    meta_scheme: str
    hyperparams: Dict[str, TreeHyperparams]
    base_scores: Dict[str, float]

    def __post_init__(self):
        if self.best_base not in VARIANTS:
            raise InvariantError(f"best_base 必须是 {VARIANTS} 之一: {self.best_base!r}")
        if tuple(b.variant for b in self.bases) != VARIANTS:
            raise InvariantError("基学习器顺序必须为 single, bagging, extra, boosted")

    @property
    def n_classes(self) -> int:
        return self.meta.n_classes

    @property
    def n_features(self) -> int:
        return self.bases[0].n_features

    def meta_features(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        check_width(X, self.n_features, "签名检测层")
        return np.hstack([_meta_block(b, X, self.meta_scheme) for b in self.bases])

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return self.meta.predict_proba(self.meta_features(X))

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.argmax(self.predict_proba(X), axis=1)


def train_signature_tier(
    train,
    cfg: PipelineConfig,
    seed: Optional[int] = None,
    ledgers: Optional[MutableMapping[str, TrialLedger]] = None,
) -> StackedModel:
    """
    训练签名检测层

    Args:
        train: 已预处理的 LabeledDataset
        cfg: 流水线配置（搜索空间、预算、折数、元特征方案）
        seed: 随机种子，默认 cfg.seed
        ledgers: 非空时记录每个变体的调参试验

    Returns:
        StackedModel: 完整的 stacking 模型
    """
    seed = cfg.seed if seed is None else seed
    X, y, C = train.features, train.labels, train.n_classes
    if np.count_nonzero(np.bincount(y, minlength=C)) < 2:
        raise DataError("签名检测层至少需要 2 个类别")
    fold_of = stratified_kfold(y, effective_folds(y, cfg.signature.cv_folds), seed)

    hyperparams: Dict[str, TreeHyperparams] = {}
    for v, variant in enumerate(VARIANTS):
        if cfg.signature.tune:
            ledger = TrialLedger(variant)
            if ledgers is not None:
                ledgers[variant] = ledger
            hyperparams[variant] = tune_base(variant, X, y, C, cfg, fold_of, seed + v, ledger)
        else:
            hyperparams[variant] = default_hyperparams(variant)

    meta = build_meta_features(X, y, C, hyperparams, fold_of, seed, cfg.signature.meta_features, cfg.threads)
    best = best_variant(meta.base_scores)
    console.print("🔧 折外 macro-F1: " + ", ".join(f"{v}={s:.4f}" for v, s in meta.base_scores.items()),
                  style="dim")

    bases = tuple(fit_variant(variant, X, y, C, hyperparams[variant], seed, cfg.threads) for variant in VARIANTS)
    meta_model = fit_variant(best, meta.matrix, y, C, hyperparams[best], seed, cfg.threads)
    console.print(f"✅ 签名检测层训练完成, 元学习器: {best}")
    return StackedModel(bases, meta_model, best, cfg.signature.meta_features, hyperparams, meta.base_scores)
