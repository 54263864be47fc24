"""
异常检测层
簇标注 k-means（CL-k-means）+ 两个偏置分类器处理低置信度样本
"""

from dataclasses import dataclass, replace
from typing import Optional, Tuple

import numpy as np
from rich.console import Console

from src.features.kpca import KpcaModel
from src.hpo.gp import bo_gp_optimize
from src.hpo.space import CategoricalParam, IntParam, RealParam, SearchSpace
from src.ingest.dataset import SplitSpec
from src.ingest.splitter import split_indices
from src.learners.ensemble import EnsembleModel, check_variant, fit_variant
from src.learners.tree import TreeHyperparams
from src.preprocess.kmeans import KMeansModel, assign, kmeans_fit
from src.utils.config import PipelineConfig
from src.utils.errors import DataError, InvariantError, check_width

console = Console(stderr=True)

NORMAL, ATTACK = 0, 1


@dataclass(frozen=True, eq=False)
class ClusterLabelModel:
    """
    簇标注模型

    每个簇按多数标签标为 normal/attack，purity 为多数标签的占比 (>= 0.5)。
    空簇标为 normal、purity 0.5；平票标为 attack。
    """

    kmeans: KMeansModel
    labels: np.ndarray
    purity: np.ndarray
    p_star: float = 0.933

    def __post_init__(self):
        if not 0.5 < self.p_star < 1.0:
            raise DataError(f"p_star 必须位于 (0.5,1): {self.p_star}")
        if len(self.labels) != self.kmeans.k or len(self.purity) != self.kmeans.k:
            raise InvariantError("每个簇都必须有标签与纯度")
        if np.any(self.purity < 0.5) or np.any(self.purity > 1.0):
            raise InvariantError("簇纯度必须位于 [0.5, 1]")

    @property
    def k(self) -> int:
        return self.kmeans.k

    @property
    def n_features(self) -> int:
        return self.kmeans.centroids.shape[1]

    def predict(self, Z: np.ndarray) -> np.ndarray:
        return self.labels[cluster_assign_batch(self, Z)[0]]


@dataclass(frozen=True)
class ClusterAssignment:
    cluster: int
    label: int
    purity: float


def cluster_assign_batch(clm: ClusterLabelModel, Z: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """批量最近质心分配，返回 (簇号, 簇标签, 纯度)；等距时取下标小的簇"""
    Z = np.atleast_2d(np.asarray(Z, dtype=np.float64))
    check_width(Z, clm.n_features, "簇标注模型")
    clusters, _ = assign(Z, clm.kmeans.centroids, clm.kmeans.distance)
    return clusters, clm.labels[clusters], clm.purity[clusters]


def cluster_assign(clm: ClusterLabelModel, x: np.ndarray) -> ClusterAssignment:
    """单行最近质心分配"""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise DataError(f"cluster_assign 需要一维行向量, 实际 {x.ndim} 维")
    clusters, labels, purity = cluster_assign_batch(clm, x[None, :])
    return ClusterAssignment(int(clusters[0]), int(labels[0]), float(purity[0]))


def label_clusters(clusters: np.ndarray, y: np.ndarray, k: int) -> Tuple[np.ndarray, np.ndarray]:
    """按多数标签标注每个簇"""
    attacks = np.bincount(clusters, weights=(y == ATTACK).astype(np.float64), minlength=k)
    sizes = np.bincount(clusters, minlength=k).astype(np.float64)
    normals = sizes - attacks
    labels = np.where(attacks >= normals, ATTACK, NORMAL)
    labels[sizes == 0] = NORMAL
    with np.errstate(divide='ignore', invalid='ignore'):
        purity = np.where(sizes > 0, np.maximum(attacks, normals) / sizes, 0.5)
    return labels.astype(np.int64), purity


def fit_cluster_labels(
    Z: np.ndarray,
    y: np.ndarray,
    k: int,
    distance: str = 'euclidean',
    p_star: float = 0.933,
    seed: int = 0,
    max_iter: int = 100,
    minibatch_size: Optional[int] = 4096,
) -> ClusterLabelModel:
    """训练 k-means 并按多数标签标注各簇"""
    kmeans = kmeans_fit(Z, k, distance, max_iter=max_iter, seed=seed, minibatch_size=minibatch_size)
    labels, purity = label_clusters(kmeans.predict(Z), np.asarray(y), k)
    return ClusterLabelModel(kmeans, labels, purity, p_star)


@dataclass(frozen=True, eq=False)
class AnomalyDecision:
    """异常检测层的批量判定"""

    cluster: np.ndarray
    cluster_label: np.ndarray
    purity: np.ndarray
    label: np.ndarray
    confidence: np.ndarray
    routed: np.ndarray


@dataclass(frozen=True, eq=False)
class AnomalyModel:
    """
    异常检测层

    b1 在 CL-k-means 的漏报 (FN) 上训练，纠正被标为 normal 的低置信度样本；
    b2 在误报 (FP) 上训练，纠正被标为 attack 的低置信度样本。
    训练集中没有对应错误时该偏置分类器为 None，路由时直接采信簇标签。
    """

    clusters: ClusterLabelModel
    b1: Optional[EnsembleModel]
    b2: Optional[EnsembleModel]
    best_base: str
    kpca: Optional[KpcaModel] = None

    def __post_init__(self):
        check_variant(self.best_base)
        for b in (self.b1, self.b2):
            if b is not None and b.variant != self.best_base:
                raise InvariantError(f"偏置分类器必须使用 {self.best_base} 算法, 实际 {b.variant}")

    @property
    def p_star(self) -> float:
        return self.clusters.p_star

    def classify(self, Z: np.ndarray, use_biased: bool = True) -> AnomalyDecision:
        """
        对已经过 KPCA 的样本做判定

        purity >= p_star 时直接采用簇标签，否则交给 b1（簇标签 normal）或 b2（簇标签 attack）。
        use_biased=False 时只用簇标签。
        """
        clusters, labels, purity = cluster_assign_batch(self.clusters, Z)
        Z = np.atleast_2d(np.asarray(Z, dtype=np.float64))
        final = labels.copy()
        confidence = purity.astype(np.float64).copy()
        routed = np.zeros(len(final), dtype=bool)
        if use_biased:
            uncertain = purity < self.p_star
            for side, model in ((NORMAL, self.b1), (ATTACK, self.b2)):
                rows = np.flatnonzero(uncertain & (labels == side))
                if model is None or rows.size == 0:
                    continue
                proba = model.predict_proba(Z[rows])
                final[rows] = np.argmax(proba, axis=1)
                confidence[rows] = proba.max(axis=1)
                routed[rows] = True
        return AnomalyDecision(clusters, labels, purity, final, confidence, routed)

    def predict(self, Z: np.ndarray, use_biased: bool = True) -> np.ndarray:
        return self.classify(Z, use_biased).label


def _balanced_rows(errors: np.ndarray, pool: np.ndarray, rng: np.random.Generator, what: str) -> np.ndarray:
    replace_draw = len(pool) < len(errors)
    if replace_draw:
        console.print(f"⚠️  {what}: 可抽样的行 ({len(pool)}) 少于错误数 ({len(errors)}), 改为有放回抽样",
                      style="yellow")
    return rng.choice(pool, size=len(errors), replace=replace_draw)


def fit_biased_classifiers(
    clm: ClusterLabelModel,
    Z: np.ndarray,
    y: np.ndarray,
    best_base: str,
    hp: Optional[TreeHyperparams] = None,
    seed: int = 0,
    n_jobs: int = 1,
) -> Tuple[Optional[EnsembleModel], Optional[EnsembleModel]]:
    """
    训练偏置分类器

    B1 = 全部 FN + 等量随机 normal 行；B2 = 全部 FP + 等量随机 attack 行。

    Returns:
        tuple: (b1, b2)，没有对应错误时为 None
    """
    rng = np.random.default_rng(seed)
    predicted = clm.predict(Z)
    fn = np.flatnonzero((predicted == NORMAL) & (y == ATTACK))
    fp = np.flatnonzero((predicted == ATTACK) & (y == NORMAL))
    normal_pool = np.flatnonzero(y == NORMAL)
    attack_pool = np.flatnonzero(y == ATTACK)

    def fit(errors: np.ndarray, pool: np.ndarray, what: str) -> Optional[EnsembleModel]:
        if errors.size == 0 or pool.size == 0:
            console.print(f"🔧 {what}: 训练集中没有对应错误, 跳过", style="dim")
            return None
        rows = np.concatenate([errors, _balanced_rows(errors, pool, rng, what)])
        return fit_variant(best_base, Z[rows], y[rows], 2, hp, seed, n_jobs)

    b1 = fit(fn, normal_pool, "B1")
    b2 = fit(fp, attack_pool, "B2")
    console.print(f"🔧 CL-k-means 训练误差: FN={fn.size}, FP={fp.size}", style="dim")
    return b1, b2


def _accuracy(predicted: np.ndarray, truth: np.ndarray) -> float:
    return float(np.mean(predicted == truth))


def train_anomaly_tier(
    train_binary,
    cfg: PipelineConfig,
    best_base: str = 'single',
    hp: Optional[TreeHyperparams] = None,
    kpca: Optional[KpcaModel] = None,
    seed: Optional[int] = None,
) -> AnomalyModel:
    """
    训练异常检测层

    (k, 距离) 由 BO-GP 在内部分层划分（验证比例 anomaly.validation_fraction）上按验证准确率调出，
    然后在全部数据上重新训练并构造偏置分类器。anomaly.tune_p_star 打开时再用 BO-GP 调 p_star。

    Args:
        train_binary: 已经过 KPCA 的二分类 LabeledDataset（0 normal / 1 attack）
        cfg: 流水线配置
        best_base: 签名检测层的最优基学习器
        hp: 该学习器的超参数
        kpca: 输入所用的 KPCA 模型
        seed: 随机种子，默认 cfg.seed

    Returns:
        AnomalyModel: 训练好的异常检测层
    """
    seed = cfg.seed if seed is None else seed
    acfg = cfg.anomaly
    Z, y = train_binary.features, train_binary.labels
    if train_binary.n_classes != 2 or len(np.unique(y)) != 2:
        raise DataError("异常检测层需要同时包含 normal 与 attack 的二分类数据")

    fit_idx, val_idx = split_indices(train_binary, SplitSpec(1.0 - acfg.validation_fraction, seed, True))
    n_fit = len(fit_idx)
    low, high = min(acfg.k_min, n_fit), min(acfg.k_max, n_fit)
    minibatch = acfg.minibatch_size or None

    def fit_on(rows: np.ndarray, assignment, p_star: float = acfg.p_star) -> ClusterLabelModel:
        return fit_cluster_labels(Z[rows], y[rows], int(assignment['k']), assignment['distance'], p_star,
                                  seed, acfg.max_iter, minibatch)

    def objective(assignment):
        clm = fit_on(fit_idx, assignment)
        return -_accuracy(clm.predict(Z[val_idx]), y[val_idx])

    space = SearchSpace([
        IntParam('k', low, high, log=high > low),
        CategoricalParam('distance', tuple(acfg.distances)),
    ])
    best = bo_gp_optimize(objective, space, acfg.budget, seed, name='CL-k-means',
                          n_init=cfg.hpo.n_init, n_candidates=cfg.hpo.gp_candidates, width=cfg.hpo.width)
    chosen = best.assignment

    p_star = acfg.p_star
    if acfg.tune_p_star:
        p_star = _tune_p_star(Z, y, fit_idx, val_idx, fit_on(fit_idx, chosen), best_base, hp, cfg, seed)

    all_rows = np.arange(len(y))
    clm = fit_on(all_rows, chosen, p_star)
    b1, b2 = fit_biased_classifiers(clm, Z, y, best_base, hp, seed, cfg.threads)
    console.print(f"✅ 异常检测层: k={clm.k}, distance={clm.kmeans.distance}, p*={p_star:.3f}, "
                  f"低置信度簇 {int(np.sum(clm.purity < p_star))}/{clm.k}")
    return AnomalyModel(clm, b1, b2, best_base, kpca)


def _tune_p_star(Z, y, fit_idx, val_idx, clm, best_base, hp, cfg, seed) -> float:
    b1, b2 = fit_biased_classifiers(clm, Z[fit_idx], y[fit_idx], best_base, hp, seed, cfg.threads)
    internal = AnomalyModel(clm, b1, b2, best_base)

    def objective(assignment):
        candidate = replace(internal, clusters=replace(clm, p_star=float(assignment['p_star'])))
        return -_accuracy(candidate.predict(Z[val_idx]), y[val_idx])

    space = SearchSpace([RealParam('p_star', 0.501, 0.999)])
    best = bo_gp_optimize(objective, space, cfg.anomaly.budget, seed, name='p_star',
                          n_init=cfg.hpo.n_init, n_candidates=cfg.hpo.gp_candidates)
    return float(best.assignment['p_star'])
