"""
决策树
Gini 分类树与牛顿步回归树（梯度提升用），扁平数组存储
"""

import dataclasses
import heapq
import math
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np

from src.utils.errors import ConfigError, check_width

MaxFeatures = Union[None, str, int, float]


@dataclass(frozen=True)
class TreeHyperparams:
    """
    树学习器超参数

    max_features 为 None 时使用变体默认值（森林 sqrt(f)，单树与提升树全部特征）；
    浮点数表示比例，整数表示个数。subsample 只作用于 extra 变体的行子集。
    """

    max_depth: int = 20
    min_samples_split: int = 2
    min_samples_leaf: int = 1
    max_features: MaxFeatures = None
    n_estimators: int = 50
    learning_rate: float = 0.1
    max_leaf_nodes: Optional[int] = None
    bootstrap: bool = True
    subsample: float = 1.0
    reg_lambda: float = 1.0

    def __post_init__(self):
        if self.max_depth < 1:
            raise ConfigError(f"max_depth 必须 >= 1: {self.max_depth}")
        if self.n_estimators < 1:
            raise ConfigError(f"n_estimators 必须 >= 1: {self.n_estimators}")
        if not 0.0 < self.learning_rate <= 1.0:
            raise ConfigError(f"learning_rate 必须位于 (0,1]: {self.learning_rate}")
        if self.min_samples_split < 2:
            raise ConfigError(f"min_samples_split 必须 >= 2: {self.min_samples_split}")
        if self.min_samples_leaf < 1:
            raise ConfigError(f"min_samples_leaf 必须 >= 1: {self.min_samples_leaf}")
        if self.max_leaf_nodes is not None and self.max_leaf_nodes < 2:
            raise ConfigError(f"max_leaf_nodes 必须 >= 2: {self.max_leaf_nodes}")
        if not 0.0 < self.subsample <= 1.0:
            raise ConfigError(f"subsample 必须位于 (0,1]: {self.subsample}")
        if self.reg_lambda < 0:
            raise ConfigError(f"reg_lambda 必须 >= 0: {self.reg_lambda}")

    def updated(self, **changes: Any) -> 'TreeHyperparams':
        """返回替换部分字段后的新对象，忽略不认识的键"""
        known = {f.name for f in dataclasses.fields(self)}
        return dataclasses.replace(self, **{k: v for k, v in changes.items() if k in known})

    def as_dict(self) -> Dict[str, Any]:
        return dataclasses.asdict(self)


def resolve_max_features(max_features: MaxFeatures, n_features: int, default: str = 'all') -> int:
    """把 max_features 规范为候选特征个数"""
    value = default if max_features is None else max_features
    if value == 'all':
        return n_features
    if value == 'sqrt':
        return max(1, int(math.sqrt(n_features)))
    if value == 'log2':
        return max(1, int(math.log2(n_features))) if n_features > 1 else 1
    if isinstance(value, float):
        if not 0.0 < value <= 1.0:
            raise ConfigError(f"max_features 比例必须位于 (0,1]: {value}")
        return max(1, int(value * n_features))
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        if value < 1:
            raise ConfigError(f"max_features 必须 >= 1: {value}")
        return min(int(value), n_features)
    raise ConfigError(f"无法识别的 max_features: {value!r}")


@dataclass(frozen=True)
class TreeNode:
    """节点视图：内部节点 (feature, threshold, left, right) 或叶子 (distribution)"""

    index: int
    feature: int
    threshold: float
    left: int
    right: int
    distribution: Optional[np.ndarray]

    @property
    def is_leaf(self) -> bool:
        return self.feature < 0


@dataclass(frozen=True, eq=False)
class Tree:
    """扁平数组编码的二叉树；feature < 0 表示叶子，x[feature] <= threshold 走左子树"""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    depth: np.ndarray
    n_features: int

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.feature < 0))

    @property
    def max_depth_reached(self) -> int:
        return int(self.depth.max())

    def node(self, i: int) -> TreeNode:
        if self.feature[i] < 0:
            return TreeNode(i, -1, math.nan, -1, -1, self.value[i])
        return TreeNode(i, int(self.feature[i]), float(self.threshold[i]),
                        int(self.left[i]), int(self.right[i]), None)

    def apply(self, X: np.ndarray) -> np.ndarray:
        """每行到达的叶子下标"""
        X = np.atleast_2d(X)
        check_width(X, self.n_features, "决策树")
        node = np.zeros(X.shape[0], dtype=np.int64)
        active = np.arange(X.shape[0])
        while active.size:
            current = node[active]
            feats = self.feature[current]
            internal = feats >= 0
            active, current, feats = active[internal], current[internal], feats[internal]
            if not active.size:
                break
            go_left = X[active, feats] <= self.threshold[current]
            node[active] = np.where(go_left, self.left[current], self.right[current])
        return node

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]


class GiniCriterion:
    """分类：统计量为 one-hot 计数，得分 sum(c^2)/n，最大化即最小化加权 Gini"""

    minimum_gain = -1e-12

    def __init__(self, y: np.ndarray, n_classes: int):
        self.stats = np.zeros((len(y), n_classes), dtype=np.float64)
        self.stats[np.arange(len(y)), y] = 1.0

    def score(self, S: np.ndarray, n: np.ndarray) -> np.ndarray:
        return np.sum(S ** 2, axis=-1) / n

    def leaf(self, S: np.ndarray, n: int) -> np.ndarray:
        return S / n

    def pure(self, S: np.ndarray, n: int) -> bool:
        return S.max() >= n


class NewtonCriterion:
    """提升回归：统计量为 (g, h)，得分 G^2/(H+λ)，叶值 -G/(H+λ)"""

    minimum_gain = 1e-12

    def __init__(self, grad: np.ndarray, hess: np.ndarray, reg_lambda: float):
        self.stats = np.column_stack([grad, hess]).astype(np.float64)
        self.reg_lambda = reg_lambda

    def score(self, S: np.ndarray, n: np.ndarray) -> np.ndarray:
        return S[..., 0] ** 2 / (S[..., 1] + self.reg_lambda)

    def leaf(self, S: np.ndarray, n: int) -> np.ndarray:
        return np.array([-S[0] / (S[1] + self.reg_lambda)])

    def pure(self, S: np.ndarray, n: int) -> bool:
        return False


@dataclass
class _Split:
    gain: float
    feature: int
    threshold: float
    left_rows: np.ndarray
    right_rows: np.ndarray


class _TreeGrower:
    def __init__(self, X: np.ndarray, criterion, hp: TreeHyperparams, n_candidates: int,
                 rng: np.random.Generator, extra: bool):
        self.X = X
        self.criterion = criterion
        self.hp = hp
        self.n_candidates = n_candidates
        self.rng = rng
        self.extra = extra
        self.feature: List[int] = []
        self.threshold: List[float] = []
        self.left: List[int] = []
        self.right: List[int] = []
        self.value: List[np.ndarray] = []
        self.depth: List[int] = []

    def _new_node(self, rows: np.ndarray, depth: int) -> int:
        S = self.criterion.stats[rows].sum(axis=0)
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(self.criterion.leaf(S, len(rows)))
        self.depth.append(depth)
        return len(self.feature) - 1

    def _exact(self, rows: np.ndarray, j: int, stats: np.ndarray, total_score: float):
        x = self.X[rows, j]
        order = np.argsort(x, kind='stable')
        xs = x[order]
        if xs[0] == xs[-1]:
            return None
        m = len(rows)
        msl = self.hp.min_samples_leaf
        cum = np.cumsum(stats[order], axis=0)
        n_left = np.arange(1, m)
        ok = (xs[:-1] < xs[1:]) & (n_left >= msl) & (m - n_left >= msl)
        idx = np.flatnonzero(ok)
        if idx.size == 0:
            return ()
        SL = cum[idx]
        SR = cum[-1] - SL
        scores = self.criterion.score(SL, n_left[idx]) + self.criterion.score(SR, m - n_left[idx])
        best = int(np.argmax(scores))
        i = idx[best]
        threshold = (xs[i] + xs[i + 1]) / 2.0
        if threshold >= xs[i + 1]:
            threshold = xs[i]
        return float(scores[best] - total_score), float(threshold)

    def _random(self, rows: np.ndarray, j: int, stats: np.ndarray, total_score: float):
        x = self.X[rows, j]
        lo, hi = x.min(), x.max()
        if lo == hi:
            return None
        threshold = float(self.rng.uniform(lo, hi))
        if threshold >= hi:
            threshold = float(lo)
        mask = x <= threshold
        n_left = int(mask.sum())
        m = len(rows)
        if n_left < self.hp.min_samples_leaf or m - n_left < self.hp.min_samples_leaf:
            return ()
        SL = stats[mask].sum(axis=0)
        SR = stats[~mask].sum(axis=0)
        score = self.criterion.score(SL, n_left) + self.criterion.score(SR, m - n_left)
        return float(score - total_score), threshold

    def find_split(self, rows: np.ndarray, depth: int) -> Optional[_Split]:
        hp = self.hp
        m = len(rows)
        if depth >= hp.max_depth or m < hp.min_samples_split or m < 2 * hp.min_samples_leaf:
            return None
        stats = self.criterion.stats[rows]
        S = stats.sum(axis=0)
        if self.criterion.pure(S, m):
            return None
        total_score = float(self.criterion.score(S, m))
        search = self._random if self.extra else self._exact

        best: Optional[Tuple[float, int, float]] = None
        evaluated = 0
        for j in self.rng.permutation(self.X.shape[1]):
            if evaluated >= self.n_candidates:
                break
            found = search(rows, int(j), stats, total_score)
            if found is None:
                # 常数特征不计入候选数
                continue
            evaluated += 1
            if not found:
                continue
            gain, threshold = found
            tol = 1e-12 * max(1.0, abs(gain))
            if best is None or gain > best[0] + tol or (abs(gain - best[0]) <= tol and j < best[1]):
                best = (gain, int(j), threshold)

        if best is None or best[0] < self.criterion.minimum_gain:
            return None
        gain, j, threshold = best
        mask = self.X[rows, j] <= threshold
        return _Split(gain, j, threshold, rows[mask], rows[~mask])

    def _attach(self, node: int, split: _Split, depth: int) -> Tuple[int, int]:
        left = self._new_node(split.left_rows, depth + 1)
        right = self._new_node(split.right_rows, depth + 1)
        self.feature[node] = split.feature
        self.threshold[node] = split.threshold
        self.left[node] = left
        self.right[node] = right
        return left, right

    def grow(self, rows: np.ndarray) -> Tree:
        root = self._new_node(rows, 0)
        if self.hp.max_leaf_nodes is None:
            stack = [(root, rows, 0)]
            while stack:
                node, node_rows, depth = stack.pop()
                split = self.find_split(node_rows, depth)
                if split is None:
                    continue
                left, right = self._attach(node, split, depth)
                stack.append((right, split.right_rows, depth + 1))
                stack.append((left, split.left_rows, depth + 1))
        else:
            # 最优优先生长，叶子数达到上限即停止
            heap: List[Tuple[float, int, int, _Split, int]] = []
            counter = 0
            split = self.find_split(rows, 0)
            if split is not None:
                heapq.heappush(heap, (-split.gain, counter, root, split, 0))
            leaves = 1
            while heap and leaves < self.hp.max_leaf_nodes:
                _, _, node, split, depth = heapq.heappop(heap)
                left, right = self._attach(node, split, depth)
                leaves += 1
                for child, child_rows in ((left, split.left_rows), (right, split.right_rows)):
                    child_split = self.find_split(child_rows, depth + 1)
                    if child_split is not None:
                        counter += 1
                        heapq.heappush(heap, (-child_split.gain, counter, child, child_split, depth + 1))

        return Tree(
            feature=np.asarray(self.feature, dtype=np.int64),
            threshold=np.asarray(self.threshold, dtype=np.float64),
            left=np.asarray(self.left, dtype=np.int64),
            right=np.asarray(self.right, dtype=np.int64),
            value=np.vstack(self.value),
            depth=np.asarray(self.depth, dtype=np.int64),
            n_features=self.X.shape[1],
        )


def fit_classification_tree(
    X: np.ndarray,
    y: np.ndarray,
    n_classes: int,
    hp: TreeHyperparams,
    rng: np.random.Generator,
    rows: Optional[np.ndarray] = None,
    extra: bool = False,
    default_features: str = 'all',
) -> Tree:
    """
    训练 Gini 分类树

    Args:
        X: 特征矩阵
        y: 类别下标
        n_classes: 类别数（叶子分布的长度）
        hp: 超参数
        rng: 特征抽样与随机阈值用的随机数生成器
        rows: 参与训练的行（可重复，用于 bootstrap），默认全部
        extra: 为 True 时每个候选特征只抽一个随机阈值
        default_features: max_features 为空时的默认值
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    rows = np.arange(len(y)) if rows is None else np.asarray(rows, dtype=np.int64)
    criterion = GiniCriterion(np.asarray(y, dtype=np.int64), n_classes)
    n_candidates = resolve_max_features(hp.max_features, X.shape[1], default_features)
    return _TreeGrower(X, criterion, hp, n_candidates, rng, extra).grow(rows)


def fit_regression_tree(
    X: np.ndarray,
    grad: np.ndarray,
    hess: np.ndarray,
    hp: TreeHyperparams,
    rng: np.random.Generator,
) -> Tree:
    """训练二阶（牛顿）回归树，叶值 -G/(H+λ)"""
    X = np.ascontiguousarray(X, dtype=np.float64)
    criterion = NewtonCriterion(grad, hess, hp.reg_lambda)
    n_candidates = resolve_max_features(hp.max_features, X.shape[1], 'all')
    return _TreeGrower(X, criterion, hp, n_candidates, rng, extra=False).grow(np.arange(len(grad)))
