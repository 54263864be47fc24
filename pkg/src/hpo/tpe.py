"""
树结构 Parzen 估计器贝叶斯优化 (BO-TPE)
按 γ 分位数把历史试验分为好/坏两组，选择 l(x)/g(x) 最大的候选点
"""

import math
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np
from rich.console import Console
from scipy.stats import norm, qmc, truncnorm

from src.execution.executor import TrialExecutor
from src.hpo.space import CategoricalParam, Param, SearchSpace, Trial, TrialLedger, assignment_key
from src.utils.errors import ConfigError

console = Console(stderr=True)

PRIOR_WEIGHT = 1.0
PRIOR_SIGMA = 1.0


class NumericParzen:
    """[0,1] 上截断高斯核的混合密度，外加一个宽的先验分量"""

    def __init__(self, observations: Sequence[float]):
        obs = np.asarray(observations, dtype=np.float64)
        centers = np.append(obs, 0.5)
        order = np.argsort(centers, kind='stable')
        ordered = centers[order]
        left = np.concatenate([[0.0], ordered[:-1]])
        right = np.concatenate([ordered[1:], [1.0]])
        # 相邻点规则：取到左右邻点距离的较大者
        spread = np.maximum(ordered - left, right - ordered)
        min_sigma = 1.0 / min(100.0, 1.0 + len(centers))
        sigmas = np.empty_like(centers)
        sigmas[order] = np.clip(spread, min_sigma, 1.0)
        sigmas[-1] = PRIOR_SIGMA
        weights = np.ones(len(centers))
        weights[-1] = PRIOR_WEIGHT
        self.centers = centers
        self.sigmas = sigmas
        self.weights = weights / weights.sum()
        self._lower = (0.0 - centers) / sigmas
        self._upper = (1.0 - centers) / sigmas
        self._mass = norm.cdf(self._upper) - norm.cdf(self._lower)

    def pdf(self, u: np.ndarray) -> np.ndarray:
        u = np.atleast_1d(np.asarray(u, dtype=np.float64))
        z = (u[:, None] - self.centers) / self.sigmas
        dens = norm.pdf(z) / (self.sigmas * self._mass)
        return dens @ self.weights

    def sample(self, rng: np.random.Generator) -> float:
        i = int(rng.choice(len(self.centers), p=self.weights))
        return float(truncnorm.rvs(self._lower[i], self._upper[i], loc=self.centers[i],
                                   scale=self.sigmas[i], random_state=rng))


class CategoricalParzen:
    """类别计数加先验的离散分布"""

    def __init__(self, param: CategoricalParam, observations: Sequence[Any]):
        counts = np.full(len(param.choices), PRIOR_WEIGHT / len(param.choices))
        for value in observations:
            counts[param.index(value)] += 1.0
        self.param = param
        self.probs = counts / counts.sum()

    def pdf_value(self, value: Any) -> float:
        return float(self.probs[self.param.index(value)])

    def sample(self, rng: np.random.Generator) -> Any:
        return self.param.choices[int(rng.choice(len(self.probs), p=self.probs))]


def _density(param: Param, values: List[Any]):
    if isinstance(param, CategoricalParam):
        return CategoricalParzen(param, values)
    return NumericParzen([param.to_unit(v) for v in values])


@dataclass
class TpeProposal:
    """一轮提案：选中的配置与全部候选点的 log l(x) - log g(x)"""

    assignment: Dict[str, Any]
    candidates: List[Dict[str, Any]]
    scores: np.ndarray


class TpeProposer:
    """
    TPE 提案器

    Args:
        space: 搜索空间（可含条件依赖）
        gamma: 好组分位数
        n_candidates: 每轮从 l(x) 抽取的候选点数
    """

    def __init__(self, space: SearchSpace, gamma: float = 0.25, n_candidates: int = 24):
        if not 0.0 < gamma < 1.0:
            raise ConfigError(f"gamma 必须位于 (0,1): {gamma}")
        self.space = space
        self.gamma = gamma
        self.n_candidates = n_candidates

    def split(self, values: np.ndarray) -> tuple:
        """按目标值升序划分好/坏两组下标；两组在 >= 2 个试验时都非空"""
        n = len(values)
        order = np.argsort(values, kind='stable')
        n_good = min(max(1, int(math.ceil(self.gamma * n))), n - 1)
        return order[:n_good], order[n_good:]

    def _models(self, trials: Sequence[Trial], rows: np.ndarray) -> Dict[str, Any]:
        models = {}
        for p in self.space.params:
            values = [trials[i].assignment[p.name] for i in rows if p.name in trials[i].assignment]
            models[p.name] = _density(p, values)
        return models

    def _draw(self, good: Dict[str, Any], rng: np.random.Generator) -> Dict[str, Any]:
        assignment: Dict[str, Any] = {}
        for p in self.space.params:
            if not self.space.is_active(p, assignment):
                continue
            model = good[p.name]
            if isinstance(p, CategoricalParam):
                assignment[p.name] = model.sample(rng)
            else:
                assignment[p.name] = p.from_unit(model.sample(rng))
        return assignment

    def score(self, assignment: Dict[str, Any], good: Dict[str, Any], bad: Dict[str, Any]) -> float:
        """log l(x) - log g(x)，只累加激活的参数"""
        total = 0.0
        for p in self.space.params:
            if p.name not in assignment:
                continue
            value = assignment[p.name]
            if isinstance(p, CategoricalParam):
                total += math.log(good[p.name].pdf_value(value)) - math.log(bad[p.name].pdf_value(value))
            else:
                u = p.to_unit(value)
                total += float(np.log(good[p.name].pdf(u))[0] - np.log(bad[p.name].pdf(u))[0])
        return total

    def propose(self, trials: Sequence[Trial], values: np.ndarray, rng: np.random.Generator) -> TpeProposal:
        """
        从 l(x) 抽取候选点并选出 l/g 最大者

        Args:
            trials: 历史试验（至少 2 个）
            values: 与 trials 对齐的目标值（失败试验已补齐）
            rng: 随机数生成器
        """
        if len(trials) < 2:
            raise ConfigError("TPE 提案至少需要 2 个历史试验")
        good_rows, bad_rows = self.split(np.asarray(values, dtype=np.float64))
        good = self._models(trials, good_rows)
        bad = self._models(trials, bad_rows)
        candidates = [self._draw(good, rng) for _ in range(self.n_candidates)]
        scores = np.array([self.score(c, good, bad) for c in candidates])
        best = int(np.argmax(scores))
        return TpeProposal(candidates[best], candidates, scores)


def bo_tpe_optimize(
    objective: Callable[[Dict[str, Any]], float],
    space: SearchSpace,
    budget: int,
    seed: int = 0,
    name: str = '',
    n_init: int = 5,
    gamma: float = 0.25,
    n_candidates: int = 24,
    width: int = 1,
    ledger: Optional[TrialLedger] = None,
) -> Trial:
    """
    用 TPE 最小化目标函数

    初始化同 BO-GP（Halton 准随机点），之后每轮按 l(x)/g(x) 选点；条件参数仅在激活时采样。
    有限空间被穷尽时提前结束。

    Returns:
        Trial: 最优试验
    """
    if budget < 1:
        raise ConfigError(f"预算必须 >= 1: {budget}")
    ledger = ledger if ledger is not None else TrialLedger(name)
    executor = TrialExecutor(width)
    proposer = TpeProposer(space, gamma, n_candidates)
    rng = np.random.default_rng(seed)
    seen = set()

    def evaluate(batch: List[Dict[str, Any]]) -> None:
        for r in executor.run_batch(objective, batch, start_index=len(ledger)):
            trial = ledger.record(r.assignment, r.value, r.execution_time, r.error)
            seen.add(assignment_key(r.assignment))
            if not trial.failed:
                console.print(f"🔧 [{name}] #{trial.index} {trial.assignment} -> {trial.objective:.6g}", style="dim")

    def unseen_sample() -> Optional[Dict[str, Any]]:
        for _ in range(100):
            a = space.sample(rng)
            if assignment_key(a) not in seen:
                return a
        return None

    initial, keys = [], set()
    halton = qmc.Halton(d=len(space), scramble=True, seed=seed)
    for u in halton.random(min(n_init, budget)):
        a = space.from_unit(u)
        if assignment_key(a) not in keys:
            keys.add(assignment_key(a))
            initial.append(a)
    evaluate(initial)

    while len(ledger) < budget and len(seen) < space.cardinality:
        take = min(width, budget - len(ledger))
        trials, values = ledger.imputed_objectives()
        batch: List[Dict[str, Any]] = []
        batch_keys = set()
        for _ in range(take):
            pick = None
            if len(trials) >= 2:
                proposal = proposer.propose(trials, values, rng)
                for i in np.argsort(-proposal.scores, kind='stable'):
                    key = assignment_key(proposal.candidates[i])
                    if key not in seen and key not in batch_keys:
                        pick = proposal.candidates[i]
                        break
            if pick is None:
                pick = unseen_sample()
            if pick is None or assignment_key(pick) in batch_keys:
                continue
            batch_keys.add(assignment_key(pick))
            batch.append(pick)
        if not batch:
            break
        evaluate(batch)

    best = ledger.incumbent()
    console.print(f"✅ [{name}] 最优 {best.assignment} -> {best.objective:.6g} ({len(ledger)} 次评估)")
    return best
