"""
验证协议
留出评估、分层 k 折交叉验证与零日（留一攻击类）评估
"""

import time
from dataclasses import dataclass, replace
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
from rich.console import Console

from src.detect.pipeline import (
    PipelineModel,
    UNKNOWN_ATTACK,
    detect_arrays,
    train_pipeline,
    verdict_labels,
)
from src.evaluation.metrics import MetricsReport, average_reports, compute_metrics
from src.ingest.dataset import LabeledDataset, SplitSpec
from src.ingest.splitter import split_holdout, stratified_kfold
from src.utils.config import PipelineConfig
from src.utils.errors import ConfigError, DataError, InvariantError

console = Console(stderr=True)

SCOPES = ('full', 'signature')


def _check_scope(scope: str) -> str:
    if scope not in SCOPES:
        raise ConfigError(f"未知的评估范围 {scope!r}, 可选 {SCOPES}")
    return scope


def _registry_map(p: PipelineModel, class_names: Sequence[str]) -> np.ndarray:
    """模型类别下标 -> 评估数据集类别下标；UnknownAttack 伪类映射到 len(class_names)"""
    lookup = {name: i for i, name in enumerate(class_names)}
    missing = [name for name in p.class_names if name not in lookup]
    if missing:
        raise DataError(f"模型类别不在评估数据的注册表中: {missing}")
    return np.array([lookup[name] for name in p.class_names] + [len(class_names)], dtype=np.int64)


def predict_labels(p: PipelineModel, X: np.ndarray, class_names: Sequence[str], scope: str = 'full',
                   use_biased: bool = True) -> np.ndarray:
    """
    在评估数据的类别空间中给出预测

    scope=signature 只用签名检测层；scope=full 使用完整的检测判定，UnknownAttack 为追加的伪类。
    """
    remap = _registry_map(p, class_names)
    if _check_scope(scope) == 'signature':
        return remap[p.stack.predict(p.signature_view(X))]
    return remap[verdict_labels(p, detect_arrays(p, X, use_biased))]


def evaluate_pipeline(p: PipelineModel, test: LabeledDataset, scope: str = 'full',
                      use_biased: bool = True) -> MetricsReport:
    """在测试集上评估；报告的类别注册表末尾追加 UnknownAttack；二分类模型先把测试集折叠为 normal/attack"""
    if p.binary_mode:
        test = test.to_binary()
    started = time.perf_counter()
    predictions = predict_labels(p, test.features, test.class_names, scope, use_biased)
    elapsed = time.perf_counter() - started
    names = test.class_names + (UNKNOWN_ATTACK,)
    attacks = set(test.positive_classes) | {test.n_classes}
    report = compute_metrics(predictions, test.labels, attacks, names)
    return replace(report, test_time=elapsed)


def holdout_eval(d: LabeledDataset, cfg: PipelineConfig, seed: Optional[int] = None,
                 scope: str = 'full') -> Tuple[PipelineModel, MetricsReport]:
    """按 evaluation.train_fraction 留出划分，训练并在测试部分评估"""
    seed = cfg.seed if seed is None else seed
    spec = SplitSpec(cfg.evaluation.train_fraction, seed, cfg.evaluation.stratified)
    train, test = split_holdout(d, spec)
    started = time.perf_counter()
    p = train_pipeline(train, cfg, seed, with_anomaly=_check_scope(scope) == 'full')
    train_time = time.perf_counter() - started
    report = evaluate_pipeline(p, test, scope)
    return p, replace(report, train_time=train_time)


def cross_validate(
    train: LabeledDataset,
    cfg: PipelineConfig,
    folds: Optional[int] = None,
    scope: Optional[str] = None,
    seed: Optional[int] = None,
) -> MetricsReport:
    """
    分层 k 折交叉验证

    每折都在该折的训练部分上完整运行训练配方；各折预测拼接后恰好覆盖训练集一次。
    最小类别样本数小于折数时减少折数并警告。

    Args:
        train: 训练集
        cfg: 流水线配置
        folds: 折数，默认 evaluation.folds
        scope: full 或 signature，默认 evaluation.scope
        seed: 随机种子，默认 cfg.seed

    Returns:
        MetricsReport: 累加混淆矩阵上的指标；时间为每折训练与验证时间的平均
    """
    seed = cfg.seed if seed is None else seed
    folds = folds or cfg.evaluation.folds
    scope = _check_scope(scope or cfg.evaluation.scope)
    if folds < 2:
        raise ConfigError(f"折数必须 >= 2: {folds}")
    counts = np.bincount(train.labels, minlength=train.n_classes)
    smallest = int(counts[counts > 0].min())
    if smallest < folds:
        reduced = max(2, smallest)
        console.print(f"⚠️  最小类别只有 {smallest} 个样本, 折数由 {folds} 降为 {reduced}", style="yellow")
        folds = reduced
    fold_of = stratified_kfold(train.labels, folds, seed)

    covered = np.zeros(train.n_samples, dtype=np.int64)
    reports = []
    for f in range(folds):
        test_rows = np.flatnonzero(fold_of == f)
        train_rows = np.flatnonzero(fold_of != f)
        console.print(f"🚀 第 {f + 1}/{folds} 折: 训练 {len(train_rows)} 行, 验证 {len(test_rows)} 行")
        started = time.perf_counter()
        p = train_pipeline(train.subset(train_rows), cfg, seed + f, with_anomaly=scope == 'full')
        train_time = time.perf_counter() - started
        report = evaluate_pipeline(p, train.subset(test_rows), scope)
        reports.append(replace(report, train_time=train_time))
        covered[test_rows] += 1
    if not np.all(covered == 1):
        raise InvariantError("交叉验证的验证折没有恰好覆盖训练集一次")

    merged = average_reports(reports)
    merged.extras['folds'] = float(folds)
    console.print(f"✅ {folds} 折交叉验证: Acc={merged.accuracy:.5f}, F1={merged.f1:.5f}, "
                  f"macro-F1={merged.macro_f1:.5f}")
    return merged


@dataclass(frozen=True, eq=False)
class ZeroDayReport:
    """零日评估结果：完整流水线与只用 CL-k-means 的消融对照"""

    attack_class: str
    full: MetricsReport
    ablation: MetricsReport
    validation_size: int
    train_size: int


def _validation_rows(d: LabeledDataset, attack: int, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    attack_rows = np.flatnonzero(d.labels == attack)
    normal_pool = np.flatnonzero(np.isin(d.labels, d.normal_classes))
    if normal_pool.size == 0:
        raise DataError("数据集中没有正常样本, 无法构造零日验证集")
    short = normal_pool.size < attack_rows.size
    if short:
        console.print(f"⚠️  正常样本 ({normal_pool.size}) 少于攻击样本 ({attack_rows.size}), 改为有放回抽样",
                      style="yellow")
    normal_rows = rng.choice(normal_pool, size=attack_rows.size, replace=short)
    return attack_rows, normal_rows


def check_zero_day_split(train: LabeledDataset, attack_class: str, train_rows: np.ndarray,
                         validation_rows: np.ndarray) -> None:
    """零日划分的防泄漏断言：训练集不含留出类别，训练行与验证行不相交"""
    if attack_class in train.class_names:
        raise InvariantError(f"零日训练集中仍包含类别 {attack_class!r}")
    shared = np.intersect1d(train_rows, validation_rows)
    if shared.size:
        raise InvariantError(f"零日训练集与验证集共享 {shared.size} 行")


def zero_day_eval(d: LabeledDataset, attack_class: str, cfg: PipelineConfig,
                  seed: Optional[int] = None) -> ZeroDayReport:
    """
    留一攻击类的零日评估

    验证集 = 该攻击类的全部行 + 等量随机正常行；其余行（删去该类后）用于训练全部各层。
    判定为 UnknownAttack 或任一 Known 攻击都算检出。

    Args:
        d: 完整数据集
        attack_class: 留出的攻击类别名
        cfg: 流水线配置
        seed: 随机种子，默认 cfg.seed
    """
    seed = cfg.seed if seed is None else seed
    attack = d.class_index(attack_class)
    if attack not in d.positive_classes:
        raise ConfigError(f"{attack_class!r} 是正常类, 不能作为零日攻击留出")
    if not np.any(d.labels == attack):
        available = [name for name, c in d.class_counts().items() if c > 0]
        raise DataError(f"类别 {attack_class!r} 没有样本, 可用类别: {available}")

    rng = np.random.default_rng(seed)
    attack_rows, normal_rows = _validation_rows(d, attack, rng)
    held_out = np.zeros(d.n_samples, dtype=bool)
    held_out[attack_rows] = True
    held_out[normal_rows] = True
    train_rows = np.flatnonzero(~held_out)
    train = d.subset(train_rows).without_class(attack_class)
    check_zero_day_split(train, attack_class, train_rows, np.concatenate([attack_rows, normal_rows]))

    started = time.perf_counter()
    p = train_pipeline(train, cfg, seed)
    train_time = time.perf_counter() - started

    X = d.features[np.concatenate([attack_rows, normal_rows])]
    truth = np.concatenate([np.ones(attack_rows.size), np.zeros(normal_rows.size)]).astype(np.int64)
    reports = {}
    for name, use_biased in (('full', True), ('ablation', False)):
        started = time.perf_counter()
        batch = detect_arrays(p, X, use_biased)
        elapsed = time.perf_counter() - started
        predicted = (batch.kind != 2).astype(np.int64)
        report = compute_metrics(predicted, truth, {1}, ('normal', 'attack'))
        reports[name] = replace(report, train_time=train_time, test_time=elapsed)

    full = reports['full']
    console.print(f"✅ 零日 [{attack_class}] 验证 {len(truth)} 行: DR={full.detection_rate:.5f}, "
                  f"FAR={full.false_alarm_rate:.5f}, F1={full.f1:.5f} (CL-k-means F1={reports['ablation'].f1:.5f})")
    return ZeroDayReport(attack_class, full, reports['ablation'], len(truth), train.n_samples)


def zero_day_sweep(d: LabeledDataset, cfg: PipelineConfig, classes: Optional[Sequence[str]] = None,
                   seed: Optional[int] = None) -> Dict[str, ZeroDayReport]:
    """依次留出每个攻击类（默认全部有样本的攻击类）"""
    if classes is None:
        counts = np.bincount(d.labels, minlength=d.n_classes)
        classes = [d.class_names[c] for c in sorted(d.positive_classes) if counts[c] > 0]
    return {name: zero_day_eval(d, name, cfg, seed) for name in classes}
