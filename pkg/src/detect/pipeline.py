"""
多层混合检测流水线
训练配方（清洗 → 簇抽样 → SMOTE → 标准化 → IG-FCBF → stacking → KPCA → CL-k-means）与逐包检测
"""

import time
from dataclasses import dataclass
from enum import Enum
from typing import Dict, FrozenSet, List, Optional, Tuple

import numpy as np
from rich.console import Console

from src.detect.anomaly import ATTACK, AnomalyModel, train_anomaly_tier
from src.detect.signature import StackedModel, train_signature_tier
from src.features.entropy import BinningRule
from src.features.kpca import KernelSpec, KpcaModel, kpca_fit, tune_kpca
from src.features.selection import FeatureSelection, fcbf_filter, ig_select, tune_alpha_ig
from src.hpo.space import TrialLedger
from src.ingest.dataset import BINARY_CLASS_NAMES, LabeledDataset, SplitSpec
from src.ingest.sanitize import sanitize
from src.ingest.splitter import split_holdout
from src.learners.ensemble import fit_variant
from src.preprocess.kmeans import cluster_sample, tune_k
from src.preprocess.scaler import ZScoreScaler
from src.preprocess.smote import SmoteConfig, smote
from src.utils.config import PipelineConfig
from src.utils.errors import DataError, InvariantError, check_width

console = Console(stderr=True)

FORMAT_VERSION = 1
UNKNOWN_ATTACK = 'UnknownAttack'


class VerdictKind(str, Enum):
    KNOWN = 'Known'
    UNKNOWN_ATTACK = 'UnknownAttack'
    NORMAL = 'Normal'


@dataclass(frozen=True)
class Verdict:
    """单个样本的检测结果；tier_trace 为触发的层号，取 (1,)、(1, 3) 或 (1, 3, 4)"""

    kind: VerdictKind
    class_index: Optional[int]
    class_name: Optional[str]
    confidence: float
    tier_trace: Tuple[int, ...]

    @property
    def is_attack(self) -> bool:
        return self.kind != VerdictKind.NORMAL


@dataclass(frozen=True, eq=False)
class DetectionBatch:
    """
    批量检测的数组形式

    kind: 0 Known / 1 UnknownAttack / 2 Normal；class_index 对 Known 为攻击类别，其余为 -1。
    """

    kind: np.ndarray
    class_index: np.ndarray
    confidence: np.ndarray
    depth: np.ndarray

    def __len__(self) -> int:
        return len(self.kind)


_KIND_CODES = (VerdictKind.KNOWN, VerdictKind.UNKNOWN_ATTACK, VerdictKind.NORMAL)
_TRACES = {1: (1,), 2: (1, 3), 3: (1, 3, 4)}


@dataclass(frozen=True, eq=False)
class PipelineModel:
    """训练好的完整流水线，不可变，可被多个线程同时用于检测"""

    scaler: ZScoreScaler
    selection: FeatureSelection
    kpca: Optional[KpcaModel]
    stack: StackedModel
    anomaly: Optional[AnomalyModel]
    class_names: Tuple[str, ...]
    positive_classes: FrozenSet[int]
    feature_names: Tuple[str, ...]
    fill_values: np.ndarray
    format_version: int = FORMAT_VERSION

    def __post_init__(self):
        f = len(self.feature_names)
        widths = [
            ("标准化参数", len(self.scaler.means), f),
            ("特征选择", len(self.selection.importances), f),
            ("缺失值填充", len(self.fill_values), f),
            ("签名检测层", self.stack.n_features, self.selection.n_selected),
        ]
        if self.kpca is not None:
            widths.append(("KPCA", self.kpca.n_features, self.selection.n_selected))
        if self.anomaly is not None:
            if self.kpca is None:
                raise InvariantError("异常检测层需要 KPCA 模型")
            widths.append(("簇标注模型", self.anomaly.clusters.n_features, self.kpca.p))
        for what, actual, expected in widths:
            if actual != expected:
                raise DataError(f"{what}宽度不匹配: 期望 {expected}, 实际 {actual}")

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    @property
    def binary_mode(self) -> bool:
        """签名检测层是否以 normal/attack 二分类训练"""
        return self.class_names == BINARY_CLASS_NAMES

    @property
    def normal_classes(self) -> Tuple[int, ...]:
        return tuple(i for i in range(self.n_classes) if i not in self.positive_classes)

    def repair(self, X: np.ndarray) -> np.ndarray:
        """非有限值用训练集的列中位数代替"""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        check_width(X, self.n_features, "检测输入")
        bad = ~np.isfinite(X)
        if bad.any():
            X = np.where(bad, self.fill_values, X)
        return X

    def signature_view(self, X: np.ndarray) -> np.ndarray:
        """原始特征 -> 标准化 -> 特征选择"""
        return self.selection.apply(self.scaler.transform(self.repair(X)))


def _trim(d: LabeledDataset) -> LabeledDataset:
    if d.timestamps is None:
        return d
    return LabeledDataset(d.features, d.labels, d.feature_names, d.class_names, d.positive_classes)


def sample_training(d: LabeledDataset, cfg: PipelineConfig, seed: int = 0) -> LabeledDataset:
    """
    k-means 簇抽样

    在标准化后的特征上用 BO-GP 调 k（最大化轮廓系数），再从每个簇中按比例抽样。
    """
    s = cfg.sampling
    if not s.enabled or s.fraction >= 1.0:
        return d
    n = d.n_samples
    low, high = min(s.k_min, n), min(s.k_max, n)
    if low < 2:
        console.print("⚠️  样本太少, 跳过簇抽样", style="yellow")
        return d
    view = ZScoreScaler.fit(d.features).transform(d.features)
    _, model = tune_k(view, (low, high), s.budget, seed, s.distance, s.eval_subsample, s.max_iter,
                      s.minibatch_size or None)
    sampled = cluster_sample(d, model, s.fraction, seed, view=view)
    console.print(f"✅ 簇抽样: {n} -> {sampled.n_samples} 行 (k={model.k})")
    return sampled


def _holdout_accuracy(X: np.ndarray, y: np.ndarray, n_classes: int, seed: int) -> float:
    """内部 80/20 划分上单棵决策树的验证准确率"""
    d = LabeledDataset(X, y, tuple(f'c{j}' for j in range(X.shape[1])),
                       tuple(str(c) for c in range(n_classes)), frozenset())
    try:
        fit_part, val_part = split_holdout(d, SplitSpec(0.8, seed, True))
    except DataError:
        fit_part, val_part = split_holdout(d, SplitSpec(0.8, seed, False))
    model = fit_variant('single', fit_part.features, fit_part.labels, n_classes, seed=seed)
    return float(np.mean(model.predict(val_part.features) == val_part.labels))


def select_features(d: LabeledDataset, cfg: PipelineConfig, seed: int = 0) -> FeatureSelection:
    """IG 累计重要性选择 + FCBF；features.tune_alpha 打开时用 BO-GP 调 alpha_ig"""
    fc = cfg.features
    if not fc.enabled:
        return FeatureSelection.all_features(d.feature_names)
    binning = BinningRule(fc.bins)
    alpha_su = fc.alpha_su if fc.fcbf else None
    if fc.tune_alpha:
        def evaluate(sel: FeatureSelection) -> float:
            return _holdout_accuracy(sel.apply(d.features), d.labels, d.n_classes, seed)

        return tune_alpha_ig(d, evaluate, fc.tune_budget, seed, binning, alpha_su)
    sel = ig_select(d, fc.alpha_ig, binning, cfg.threads)
    return fcbf_filter(d, sel, alpha_su, binning) if alpha_su is not None else sel


def fit_kpca_stage(X: np.ndarray, y_binary: np.ndarray, cfg: PipelineConfig, seed: int = 0) -> KpcaModel:
    """在至多 kpca.max_rows 行上拟合 KPCA；kpca.tune 打开时用 BO-GP 调维数与核"""
    kc = cfg.kpca
    rng = np.random.default_rng(seed)
    rows = np.arange(len(X))
    if len(rows) > kc.max_rows:
        rows = np.sort(rng.choice(len(X), size=kc.max_rows, replace=False))
    Xk = X[rows]
    kernel = KernelSpec(kc.kernel, kc.gamma, kc.degree, kc.coef0)
    if not kc.tune:
        return kpca_fit(Xk, kernel, kc.n_components)

    def evaluate(model: KpcaModel) -> float:
        return _holdout_accuracy(model.transform(Xk), y_binary[rows], 2, seed)

    return tune_kpca(Xk, evaluate, kc.tune_budget, seed, (2, max(2, kc.n_components * 2)), base=kernel)


def train_pipeline(
    train: LabeledDataset,
    cfg: PipelineConfig,
    seed: Optional[int] = None,
    with_anomaly: bool = True,
    ledgers: Optional[Dict[str, TrialLedger]] = None,
) -> PipelineModel:
    """
    完整训练配方

    Args:
        train: 原始训练集（不能包含测试行）
        cfg: 流水线配置
        seed: 随机种子，默认 cfg.seed
        with_anomaly: False 时只训练签名检测层（不拟合 KPCA 与异常检测层）
        ledgers: 非空时记录签名检测层的调参试验

    Returns:
        PipelineModel: 训练好的流水线
    """
    seed = cfg.seed if seed is None else seed
    started = time.perf_counter()
    console.print(f"🚀 开始训练: {train.n_samples} 行, {train.n_features} 个特征, {train.n_classes} 个类别")

    d = _trim(sanitize(train))
    if cfg.signature.mode == 'binary':
        d = d.to_binary()
        console.print(f"🔧 二分类模式: {int(d.labels.sum())} 个攻击样本, {int((d.labels == 0).sum())} 个正常样本")
    fill_values = np.median(d.features, axis=0)
    d = sample_training(d, cfg, seed)
    if cfg.smote.enabled:
        d = smote(d, SmoteConfig(cfg.smote.k_neighbors, cfg.smote.target_count, seed))

    scaler = ZScoreScaler.fit(d.features)
    scaled = d.with_features(scaler.transform(d.features), d.feature_names)
    selection = select_features(scaled, cfg, seed)
    selected = scaled.with_features(selection.apply(scaled.features), selection.selected_names)

    stack = train_signature_tier(selected, cfg, seed, ledgers)

    kpca = anomaly = None
    if with_anomaly:
        binary = selected.to_binary()
        if len(np.unique(binary.labels)) < 2:
            console.print("⚠️  训练集缺少 normal 或 attack 样本, 跳过异常检测层", style="yellow")
        else:
            kpca = fit_kpca_stage(binary.features, binary.labels, cfg, seed)
            Z = kpca.transform(binary.features)
            projected = binary.with_features(Z, tuple(f'kpc{i}' for i in range(kpca.p)))
            anomaly = train_anomaly_tier(projected, cfg, stack.best_base, stack.hyperparams[stack.best_base],
                                         kpca, seed)

    model = PipelineModel(
        scaler=scaler,
        selection=selection,
        kpca=kpca,
        stack=stack,
        anomaly=anomaly,
        class_names=d.class_names,
        positive_classes=d.positive_classes,
        feature_names=d.feature_names,
        fill_values=fill_values,
    )
    console.print(f"✅ 训练完成, 耗时 {time.perf_counter() - started:.1f}s")
    return model


def detect_arrays(p: PipelineModel, X: np.ndarray, use_biased: bool = True) -> DetectionBatch:
    """
    向量化检测

    签名检测层判为攻击类 -> Known；判为正常 -> KPCA + 簇标注，purity >= p_star 采用簇标签，
    否则交给对应的偏置分类器。use_biased=False 为只用 CL-k-means 的消融版本。
    """
    V = p.signature_view(X)
    proba = p.stack.predict_proba(V)
    predicted = np.argmax(proba, axis=1)
    n = len(predicted)
    kind = np.zeros(n, dtype=np.int64)
    class_index = np.where(np.isin(predicted, sorted(p.positive_classes)), predicted, -1)
    confidence = proba.max(axis=1)
    depth = np.ones(n, dtype=np.int64)

    suspicious = np.flatnonzero(class_index < 0)
    kind[suspicious] = 2
    if suspicious.size and p.anomaly is not None:
        decision = p.anomaly.classify(p.kpca.transform(V[suspicious]), use_biased)
        kind[suspicious] = np.where(decision.label == ATTACK, 1, 2)
        confidence[suspicious] = decision.confidence
        depth[suspicious] = np.where(decision.routed, 3, 2)
    return DetectionBatch(kind, class_index, confidence, depth)


def detect_batch(p: PipelineModel, X: np.ndarray, use_biased: bool = True) -> List[Verdict]:
    """批量检测，每行一个 Verdict"""
    batch = detect_arrays(p, X, use_biased)
    verdicts = []
    for k, c, conf, depth in zip(batch.kind, batch.class_index, batch.confidence, batch.depth):
        known = k == 0
        verdicts.append(Verdict(
            kind=_KIND_CODES[k],
            class_index=int(c) if known else None,
            class_name=p.class_names[c] if known else None,
            confidence=float(conf),
            tier_trace=_TRACES[int(depth)],
        ))
    return verdicts


def detect(p: PipelineModel, x: np.ndarray) -> Verdict:
    """单个样本检测"""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise DataError(f"detect 需要一维原始特征行, 实际 {x.ndim} 维")
    return detect_batch(p, x[None, :])[0]


def verdict_labels(p: PipelineModel, batch: DetectionBatch) -> np.ndarray:
    """
    把判定映射为类别下标

    Known -> 攻击类别；Normal -> 正常类（唯一正常类的下标）；UnknownAttack -> n_classes（追加的伪类）。
    """
    normals = p.normal_classes
    normal = normals[0] if normals else -1
    labels = np.full(len(batch), normal, dtype=np.int64)
    labels[batch.kind == 0] = batch.class_index[batch.kind == 0]
    labels[batch.kind == 1] = p.n_classes
    return labels
