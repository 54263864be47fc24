"""
超参数搜索空间与试验账本
整数/实数/类别参数、条件依赖、单位立方体映射和线程安全的试验记录
"""

import json
import math
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from src.utils.errors import ConfigError, DataError


@dataclass(frozen=True)
class Condition:
    """参数仅在父参数取 value 时激活"""

    parent: str
    value: Any


def _round(x: float) -> int:
    return int(math.floor(x + 0.5))


@dataclass(frozen=True)
class IntParam:
    name: str
    low: int
    high: int
    log: bool = False
    condition: Optional[Condition] = None

    def __post_init__(self):
        if self.low > self.high:
            raise ConfigError(f"参数 {self.name}: 区间为空 [{self.low},{self.high}]")
        if self.log and self.low < 1:
            raise ConfigError(f"参数 {self.name}: 对数尺度要求 low >= 1")

    @property
    def cardinality(self) -> float:
        return self.high - self.low + 1

    def from_unit(self, u: float) -> int:
        u = min(max(float(u), 0.0), 1.0)
        if self.log:
            lo, hi = math.log(self.low), math.log(self.high)
            value = _round(math.exp(lo + u * (hi - lo)))
        else:
            value = _round(self.low + u * (self.high - self.low))
        return min(max(value, self.low), self.high)

    def to_unit(self, value: Any) -> float:
        if self.high == self.low:
            return 0.5
        if self.log:
            lo, hi = math.log(self.low), math.log(self.high)
            return (math.log(value) - lo) / (hi - lo)
        return (value - self.low) / (self.high - self.low)

    def contains(self, value: Any) -> bool:
        return isinstance(value, (int, np.integer)) and not isinstance(value, bool) \
            and self.low <= value <= self.high


@dataclass(frozen=True)
class RealParam:
    name: str
    low: float
    high: float
    log: bool = False
    condition: Optional[Condition] = None

    def __post_init__(self):
        if not self.low < self.high:
            raise ConfigError(f"参数 {self.name}: 区间为空 [{self.low},{self.high}]")
        if self.log and self.low <= 0:
            raise ConfigError(f"参数 {self.name}: 对数尺度要求 low > 0")

    @property
    def cardinality(self) -> float:
        return math.inf

    def from_unit(self, u: float) -> float:
        u = min(max(float(u), 0.0), 1.0)
        if self.log:
            lo, hi = math.log(self.low), math.log(self.high)
            return min(max(math.exp(lo + u * (hi - lo)), self.low), self.high)
        return self.low + u * (self.high - self.low)

    def to_unit(self, value: Any) -> float:
        if self.log:
            lo, hi = math.log(self.low), math.log(self.high)
            return (math.log(value) - lo) / (hi - lo)
        return (value - self.low) / (self.high - self.low)

    def contains(self, value: Any) -> bool:
        return isinstance(value, (float, int, np.floating, np.integer)) and not isinstance(value, bool) \
            and self.low <= value <= self.high


@dataclass(frozen=True)
class CategoricalParam:
    name: str
    choices: Tuple[Any, ...]
    condition: Optional[Condition] = None

    def __post_init__(self):
        object.__setattr__(self, 'choices', tuple(self.choices))
        if not self.choices:
            raise ConfigError(f"参数 {self.name}: 没有可选值")
        if len(set(map(repr, self.choices))) != len(self.choices):
            raise ConfigError(f"参数 {self.name}: 可选值重复")

    @property
    def cardinality(self) -> float:
        return len(self.choices)

    def index(self, value: Any) -> int:
        for i, choice in enumerate(self.choices):
            if choice == value and type(choice) is type(value):
                return i
        for i, choice in enumerate(self.choices):
            if choice == value:
                return i
        raise ConfigError(f"参数 {self.name}: {value!r} 不在 {self.choices}")

    def from_unit(self, u: float) -> Any:
        u = min(max(float(u), 0.0), 1.0)
        return self.choices[min(int(u * len(self.choices)), len(self.choices) - 1)]

    def to_unit(self, value: Any) -> float:
        return (self.index(value) + 0.5) / len(self.choices)

    def contains(self, value: Any) -> bool:
        return any(choice == value for choice in self.choices)


Param = Union[IntParam, RealParam, CategoricalParam]


def _parse_scalar(token: str) -> Any:
    token = token.strip()
    if token.lower() == 'none':
        return None
    if token.lower() in ('true', 'false'):
        return token.lower() == 'true'
    for cast in (int, float):
        try:
            return cast(token)
        except ValueError:
            pass
    return token


def parse_param(name: str, text: str) -> Param:
    """
    解析参数描述字符串

    格式: int:lo:hi[:log] | real:lo:hi[:log] | cat:a|b|c，可追加 @parent=value
    """
    condition = None
    body = text.strip()
    if '@' in body:
        body, cond = body.split('@', 1)
        if '=' not in cond:
            raise ConfigError(f"参数 {name}: 条件必须形如 @parent=value, 实际 {cond!r}")
        parent, value = cond.split('=', 1)
        condition = Condition(parent.strip(), _parse_scalar(value))
    kind, _, rest = body.partition(':')
    kind = kind.strip()
    try:
        if kind == 'cat':
            return CategoricalParam(name, tuple(_parse_scalar(c) for c in rest.split('|')), condition)
        parts = rest.split(':')
        log = len(parts) == 3 and parts[2].strip() == 'log'
        if len(parts) not in (2, 3) or (len(parts) == 3 and not log):
            raise ConfigError(f"参数 {name}: 无法解析 {text!r}")
        if kind == 'int':
            return IntParam(name, int(parts[0]), int(parts[1]), log, condition)
        if kind == 'real':
            return RealParam(name, float(parts[0]), float(parts[1]), log, condition)
    except ValueError as e:
        raise ConfigError(f"参数 {name}: 无法解析 {text!r} ({e})") from None
    raise ConfigError(f"参数 {name}: 未知类型 {kind!r}")


class SearchSpace:
    """超参数配置空间；参数按依赖关系做拓扑排序"""

    def __init__(self, params: Sequence[Param]):
        names = [p.name for p in params]
        if len(set(names)) != len(names):
            raise ConfigError(f"参数名重复: {names}")
        by_name = {p.name: p for p in params}
        for p in params:
            if p.condition is None:
                continue
            parent = by_name.get(p.condition.parent)
            if parent is None:
                raise ConfigError(f"参数 {p.name} 的父参数 {p.condition.parent!r} 不存在")
            if not parent.contains(p.condition.value):
                raise ConfigError(f"参数 {p.name} 的条件值 {p.condition.value!r} 不在父参数取值范围内")
        self.params: Tuple[Param, ...] = tuple(self._toposort(params, by_name))

    @staticmethod
    def _toposort(params: Sequence[Param], by_name: Dict[str, Param]) -> List[Param]:
        ordered: List[Param] = []
        state: Dict[str, int] = {}

        def visit(p: Param, chain: Tuple[str, ...]):
            if state.get(p.name) == 2:
                return
            if state.get(p.name) == 1:
                raise ConfigError(f"条件依赖存在环: {' -> '.join(chain + (p.name,))}")
            state[p.name] = 1
            if p.condition is not None:
                visit(by_name[p.condition.parent], chain + (p.name,))
            state[p.name] = 2
            ordered.append(p)

        for p in params:
            visit(p, ())
        return ordered

    @classmethod
    def parse(cls, mapping: Mapping[str, str]) -> 'SearchSpace':
        """从 {参数名: 描述字符串} 构建空间"""
        return cls([parse_param(name, text) for name, text in mapping.items()])

    def __len__(self) -> int:
        return len(self.params)

    def __iter__(self):
        return iter(self.params)

    @property
    def names(self) -> List[str]:
        return [p.name for p in self.params]

    @property
    def is_conditional(self) -> bool:
        return any(p.condition is not None for p in self.params)

    @property
    def cardinality(self) -> float:
        """离散空间的配置总数（条件空间为上界）；含实数参数时为 inf"""
        total = 1.0
        for p in self.params:
            total *= p.cardinality
        return total

    def is_active(self, p: Param, assignment: Mapping[str, Any]) -> bool:
        if p.condition is None:
            return True
        parent = p.condition.parent
        return parent in assignment and assignment[parent] == p.condition.value

    def active(self, assignment: Mapping[str, Any]) -> List[str]:
        """在给定父参数取值下激活的参数名"""
        seen: Dict[str, Any] = {}
        names = []
        for p in self.params:
            if self.is_active(p, seen):
                names.append(p.name)
                if p.name in assignment:
                    seen[p.name] = assignment[p.name]
        return names

    def sample(self, rng: np.random.Generator) -> Dict[str, Any]:
        return self.from_unit(rng.random(len(self.params)))

    def from_unit(self, u: Sequence[float]) -> Dict[str, Any]:
        """单位立方体向量 -> 配置（未激活的参数不出现）"""
        assignment: Dict[str, Any] = {}
        for p, x in zip(self.params, u):
            if self.is_active(p, assignment):
                assignment[p.name] = p.from_unit(x)
        return assignment

    def to_unit(self, assignment: Mapping[str, Any]) -> np.ndarray:
        """配置 -> 单位立方体向量（未激活的参数取 0.5）"""
        return np.array([p.to_unit(assignment[p.name]) if p.name in assignment else 0.5
                         for p in self.params], dtype=np.float64)

    def snap(self, u: np.ndarray) -> np.ndarray:
        """把单位向量投到可取值的位置（整数取整、类别取中心）"""
        return self.to_unit(self.from_unit(u))

    def is_valid(self, assignment: Mapping[str, Any]) -> bool:
        try:
            self.validate(assignment)
        except ConfigError:
            return False
        return True

    def validate(self, assignment: Mapping[str, Any]) -> None:
        """校验类型、范围与条件激活；不合法时抛出 ConfigError"""
        active = set(self.active(assignment))
        extra = set(assignment) - active
        if extra:
            raise ConfigError(f"未激活或未知的参数: {sorted(extra)}")
        for p in self.params:
            if p.name not in active:
                continue
            if p.name not in assignment:
                raise ConfigError(f"缺少参数 {p.name}")
            if not p.contains(assignment[p.name]):
                raise ConfigError(f"参数 {p.name} 取值非法: {assignment[p.name]!r}")


def assignment_key(assignment: Mapping[str, Any]) -> str:
    """配置的规范键，用于去重"""
    return json.dumps({k: _jsonable(v) for k, v in sorted(assignment.items())}, sort_keys=True)


def _jsonable(value: Any) -> Any:
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    return value


@dataclass
class Trial:
    """一次目标函数评估"""

    index: int
    assignment: Dict[str, Any]
    objective: float
    wall_time: float = 0.0
    status: str = 'ok'
    error: Optional[str] = None

    @property
    def failed(self) -> bool:
        return self.status == 'failed'


class TrialLedger:
    """线程安全的试验账本（目标值越小越好）"""

    def __init__(self, name: str = ''):
        self.name = name
        self._trials: List[Trial] = []
        self._lock = threading.Lock()

    def __len__(self) -> int:
        with self._lock:
            return len(self._trials)

    def record(self, assignment: Dict[str, Any], objective: Optional[float], wall_time: float = 0.0,
               error: Optional[str] = None) -> Trial:
        failed = error is not None or objective is None or not math.isfinite(objective)
        with self._lock:
            trial = Trial(
                index=len(self._trials),
                assignment=dict(assignment),
                objective=math.nan if failed else float(objective),
                wall_time=wall_time,
                status='failed' if failed else 'ok',
                error=error if failed and error else ('非有限目标值' if failed else None),
            )
            self._trials.append(trial)
            return trial

    def snapshot(self) -> List[Trial]:
        with self._lock:
            return list(self._trials)

    def worst(self) -> Optional[float]:
        values = [t.objective for t in self.snapshot() if not t.failed]
        return max(values) if values else None

    def imputed_objectives(self) -> Tuple[List[Trial], np.ndarray]:
        """失败的试验用最差观测值补齐；全部失败时返回空"""
        trials = self.snapshot()
        worst = self.worst()
        if worst is None:
            return [], np.empty(0)
        values = np.array([worst if t.failed else t.objective for t in trials], dtype=np.float64)
        return trials, values

    def incumbent(self) -> Trial:
        best = None
        for t in self.snapshot():
            if not t.failed and (best is None or t.objective < best.objective):
                best = t
        if best is None:
            raise DataError(f"{self.name or '搜索'}: 所有试验均失败")
        return best

    def incumbent_trace(self) -> List[float]:
        """按试验序号的当前最优目标值（非增）"""
        trace, best = [], math.inf
        for t in self.snapshot():
            if not t.failed:
                best = min(best, t.objective)
            trace.append(best)
        return trace

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([{
            'index': t.index,
            'assignment': assignment_key(t.assignment),
            'objective': t.objective,
            'wall_time': t.wall_time,
            'status': t.status,
        } for t in self.snapshot()], columns=['index', 'assignment', 'objective', 'wall_time', 'status'])

    def to_csv(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(path, index=False)
        return path
