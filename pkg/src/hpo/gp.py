"""
高斯过程贝叶斯优化 (BO-GP)
Matérn-5/2 核的 GP 代理模型 + 期望改进采集函数
"""

import itertools
import math
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np
from rich.console import Console
from scipy.linalg import LinAlgError, cho_factor, cho_solve, solve_triangular
from scipy.optimize import minimize
from scipy.spatial.distance import cdist
from scipy.stats import norm, qmc

from src.execution.executor import TrialExecutor
from src.hpo.space import CategoricalParam, IntParam, SearchSpace, Trial, TrialLedger, assignment_key
from src.utils.errors import ConfigError

console = Console(stderr=True)

SQRT5 = math.sqrt(5.0)

# 单位立方体上的超参数边界（对数尺度）
LENGTHSCALE_BOUNDS = (1e-2, 1e2)
SIGNAL_BOUNDS = (1e-2, 1e2)
NOISE_BOUNDS = (1e-10, 1e-1)


def matern52(A: np.ndarray, B: np.ndarray, lengthscales: np.ndarray, variance: float) -> np.ndarray:
    """Matérn-5/2 核矩阵"""
    r = cdist(A / lengthscales, B / lengthscales)
    return variance * (1.0 + SQRT5 * r + 5.0 / 3.0 * r ** 2) * np.exp(-SQRT5 * r)


def _cholesky(K: np.ndarray):
    jitter = 0.0
    for _ in range(8):
        try:
            return cho_factor(K + jitter * np.eye(len(K)), lower=True)
        except LinAlgError:
            jitter = 1e-10 if jitter == 0.0 else jitter * 10
    raise LinAlgError("核矩阵加抖动后仍非正定")


class GpSurrogate:
    """
    GP 代理模型

    Args:
        lengthscales: 各维长度尺度，为空时取 0.5
        signal_variance: 信号方差
        noise_variance: 观测噪声方差
        normalize_y: 拟合前是否标准化目标值
    """

    def __init__(
        self,
        lengthscales: Optional[np.ndarray] = None,
        signal_variance: float = 1.0,
        noise_variance: float = 1e-6,
        normalize_y: bool = True,
    ):
        self.lengthscales = None if lengthscales is None else np.asarray(lengthscales, dtype=np.float64)
        self.signal_variance = float(signal_variance)
        self.noise_variance = float(noise_variance)
        self.normalize_y = normalize_y
        self._X: Optional[np.ndarray] = None

    def _neg_log_likelihood(self, theta: np.ndarray, X: np.ndarray, y: np.ndarray) -> float:
        d = X.shape[1]
        lengthscales = np.exp(theta[:d])
        variance, noise = np.exp(theta[d]), np.exp(theta[d + 1])
        K = matern52(X, X, lengthscales, variance) + noise * np.eye(len(X))
        try:
            factor = _cholesky(K)
        except LinAlgError:
            return 1e25
        alpha = cho_solve(factor, y)
        return float(0.5 * y @ alpha + np.log(np.diag(factor[0])).sum() + 0.5 * len(X) * math.log(2 * math.pi))

    def _optimize(self, X: np.ndarray, y: np.ndarray, rng: np.random.Generator) -> None:
        d = X.shape[1]
        bounds = ([tuple(np.log(LENGTHSCALE_BOUNDS))] * d
                  + [tuple(np.log(SIGNAL_BOUNDS)), tuple(np.log(NOISE_BOUNDS))])
        starts = [np.concatenate([np.log(self.lengthscales), [math.log(self.signal_variance),
                                                             math.log(max(self.noise_variance, NOISE_BOUNDS[0]))]])]
        for _ in range(2):
            starts.append(np.array([rng.uniform(lo, hi) for lo, hi in bounds]))
        best_theta, best_value = starts[0], math.inf
        for theta0 in starts:
            result = minimize(self._neg_log_likelihood, theta0, args=(X, y), method='L-BFGS-B', bounds=bounds)
            if result.fun < best_value:
                best_theta, best_value = result.x, result.fun
        self.lengthscales = np.exp(best_theta[:d])
        self.signal_variance = float(np.exp(best_theta[d]))
        self.noise_variance = float(np.exp(best_theta[d + 1]))

    def fit(self, X: np.ndarray, y: np.ndarray, optimize: bool = True,
            rng: Optional[np.random.Generator] = None) -> 'GpSurrogate':
        """
        拟合代理模型

        Args:
            X: 单位立方体中的观测点 n×d
            y: 目标值
            optimize: 是否以最大化边际似然的方式拟合核超参数
            rng: 多起点优化用的随机数生成器
        """
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        y = np.asarray(y, dtype=np.float64)
        if self.lengthscales is None:
            self.lengthscales = np.full(X.shape[1], 0.5)
        self._y_mean, self._y_std = 0.0, 1.0
        if self.normalize_y:
            self._y_mean = float(y.mean())
            std = float(y.std())
            self._y_std = std if std > 0 else 1.0
        y_n = (y - self._y_mean) / self._y_std
        if optimize:
            self._optimize(X, y_n, rng if rng is not None else np.random.default_rng(0))
        K = matern52(X, X, self.lengthscales, self.signal_variance) + self.noise_variance * np.eye(len(X))
        self._factor = _cholesky(K)
        self._alpha = cho_solve(self._factor, y_n)
        self._X = X
        return self

    def predict(self, Xs: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """后验均值与方差（不含观测噪声）"""
        if self._X is None:
            raise ConfigError("GP 尚未拟合")
        Xs = np.atleast_2d(np.asarray(Xs, dtype=np.float64))
        Ks = matern52(Xs, self._X, self.lengthscales, self.signal_variance)
        mean = Ks @ self._alpha
        v = solve_triangular(self._factor[0], Ks.T, lower=True)
        var = np.maximum(self.signal_variance - np.sum(v ** 2, axis=0), 0.0)
        return mean * self._y_std + self._y_mean, var * self._y_std ** 2


def expected_improvement(mean: np.ndarray, var: np.ndarray, best: float, xi: float = 0.0) -> np.ndarray:
    """最小化意义下的期望改进"""
    std = np.sqrt(np.maximum(var, 0.0))
    improve = best - mean - xi
    with np.errstate(divide='ignore', invalid='ignore'):
        z = np.where(std > 0, improve / std, 0.0)
    ei = improve * norm.cdf(z) + std * norm.pdf(z)
    return np.where(std > 0, ei, np.maximum(improve, 0.0))


def _enumerate(space: SearchSpace) -> List[Dict[str, Any]]:
    values = []
    for p in space.params:
        if isinstance(p, IntParam):
            values.append(range(p.low, p.high + 1))
        elif isinstance(p, CategoricalParam):
            values.append(p.choices)
    return [dict(zip(space.names, combo)) for combo in itertools.product(*values)]


def _candidates(space: SearchSpace, n_candidates: int, rng: np.random.Generator,
                incumbent: Optional[Dict[str, Any]]) -> List[Dict[str, Any]]:
    if space.cardinality <= n_candidates:
        return _enumerate(space)
    U = rng.random((n_candidates, len(space)))
    if incumbent is not None:
        # 四分之一候选点落在当前最优点附近
        local = n_candidates // 4
        center = space.to_unit(incumbent)
        U[:local] = np.clip(center + rng.normal(0.0, 0.05, size=(local, len(space))), 0.0, 1.0)
    return [space.from_unit(u) for u in U]


def bo_gp_optimize(
    objective: Callable[[Dict[str, Any]], float],
    space: SearchSpace,
    budget: int,
    seed: int = 0,
    name: str = '',
    n_init: int = 5,
    n_candidates: int = 2048,
    width: int = 1,
    ledger: Optional[TrialLedger] = None,
) -> Trial:
    """
    用 GP 代理模型最小化目标函数

    先用 min(n_init, budget) 个 Halton 准随机点初始化，之后每轮拟合 GP 并评估
    期望改进最大的未评估候选点。失败的试验以最差观测值补齐。有限空间被穷尽时提前结束。

    Args:
        objective: 配置 -> 目标值（越小越好）
        space: 不含条件依赖的搜索空间
        budget: 最多评估次数
        seed: 随机种子
        name: 搜索名称（用于日志）
        n_init: 初始点个数
        n_candidates: 每轮采集函数的候选点数
        width: 每轮并发评估的点数
        ledger: 可选的外部试验账本

    Returns:
        Trial: 最优试验
    """
    if space.is_conditional:
        raise ConfigError("BO-GP 只支持无条件依赖的搜索空间，请使用 BO-TPE")
    if budget < 1:
        raise ConfigError(f"预算必须 >= 1: {budget}")
    ledger = ledger if ledger is not None else TrialLedger(name)
    executor = TrialExecutor(width)
    rng = np.random.default_rng(seed)
    seen = set()

    def evaluate(batch: List[Dict[str, Any]]) -> None:
        for r in executor.run_batch(objective, batch, start_index=len(ledger)):
            trial = ledger.record(r.assignment, r.value, r.execution_time, r.error)
            seen.add(assignment_key(r.assignment))
            if not trial.failed:
                console.print(f"🔧 [{name}] #{trial.index} {trial.assignment} -> {trial.objective:.6g}", style="dim")

    if space.cardinality == 1:
        evaluate([space.from_unit(np.full(len(space), 0.5))])
        return ledger.incumbent()

    initial: List[Dict[str, Any]] = []
    initial_keys = set()
    halton = qmc.Halton(d=len(space), scramble=True, seed=seed)
    for u in halton.random(min(n_init, budget)):
        a = space.from_unit(u)
        key = assignment_key(a)
        if key not in initial_keys:
            initial_keys.add(key)
            initial.append(a)
    evaluate(initial)

    while len(ledger) < budget and len(seen) < space.cardinality:
        trials, y = ledger.imputed_objectives()
        incumbent = ledger.incumbent().assignment if len(y) else None
        pool = [a for a in _candidates(space, n_candidates, rng, incumbent) if assignment_key(a) not in seen]
        unique: Dict[str, Dict[str, Any]] = {}
        for a in pool:
            unique.setdefault(assignment_key(a), a)
        pool = list(unique.values())
        if not pool:
            break
        take = min(width, budget - len(ledger), len(pool))
        if not len(y):
            picks = [pool[i] for i in rng.choice(len(pool), size=take, replace=False)]
        else:
            X = np.array([space.to_unit(t.assignment) for t in trials])
            gp = GpSurrogate().fit(X, y, rng=rng)
            mean, var = gp.predict(np.array([space.to_unit(a) for a in pool]))
            ei = expected_improvement(mean, var, float(y.min()))
            picks = [pool[i] for i in np.argsort(-ei, kind='stable')[:take]]
        evaluate(picks)

    best = ledger.incumbent()
    console.print(f"✅ [{name}] 最优 {best.assignment} -> {best.objective:.6g} ({len(ledger)} 次评估)")
    return best
