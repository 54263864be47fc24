"""
原始数据加载器
解析 CAN 帧日志与流量特征 CSV，生成 LabeledDataset
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from rich.console import Console

from src.ingest.dataset import (
    CAN_FEATURE_NAMES,
    DEFAULT_NORMAL_LABELS,
    LABEL_COLUMN,
    LabeledDataset,
    encode_labels,
)
from src.utils.errors import DataError

console = Console(stderr=True)

# 流量 CSV 中的特殊数值记号（区分大小写）
FLOW_TOKENS: Dict[str, float] = {
    'Infinity': np.inf,
    '-Infinity': -np.inf,
    'NaN': np.nan,
    '': np.nan,
}

# 标识类字段不参与学习
FLOW_ID_COLUMNS = ('Flow ID', 'Source IP', 'Src IP', 'Destination IP', 'Dst IP', 'Timestamp')

MAX_REPORTED_ERRORS = 20


@dataclass
class LoadReport:
    """解析报告：被拒绝的行及原因"""

    path: str = ''
    rows_read: int = 0
    rows_rejected: int = 0
    non_finite_cells: int = 0
    errors: List[Tuple[int, str]] = field(default_factory=list)

    def reject(self, line: int, reason: str) -> None:
        self.rows_rejected += 1
        if len(self.errors) < MAX_REPORTED_ERRORS:
            self.errors.append((line, reason))

    def summary(self) -> str:
        return (f"{self.path}: 读取 {self.rows_read} 行, 拒绝 {self.rows_rejected} 行, "
                f"非有限值 {self.non_finite_cells} 个")


@dataclass(frozen=True)
class LabelPolicy:
    """
    CAN 日志的标签策略

    attack_name 非空时最后一列是标志位（R=正常, T=注入），注入帧标记为 attack_name；
    attack_name 为空时最后一列直接是类别名。
    """

    attack_name: Optional[str] = None
    normal_name: str = 'Normal'

    @classmethod
    def for_file(cls, path: Union[str, Path], attack_names: Mapping[str, str],
                 normal_name: str = 'Normal') -> 'LabelPolicy':
        """按文件名（不含扩展名）从配置映射中取攻击名"""
        return cls(attack_name=attack_names.get(Path(path).stem), normal_name=normal_name)

    def resolve(self, token: str) -> str:
        if self.attack_name is None:
            if not token:
                raise ValueError("标签为空")
            return token
        if token == 'R':
            return self.normal_name
        if token == 'T':
            return self.attack_name
        raise ValueError(f"未知标志位 {token!r}")


def _parse_hex(token: str, what: str, limit: int) -> int:
    try:
        value = int(token, 16)
    except ValueError:
        raise ValueError(f"{what} 不是合法十六进制: {token!r}") from None
    if not 0 <= value < limit:
        raise ValueError(f"{what} 超出范围: {token!r}")
    return value


def _parse_can_row(tokens: List[str], policy: LabelPolicy) -> Tuple[float, List[float], str]:
    if len(tokens) < 4:
        raise ValueError(f"字段数不足: {len(tokens)}")
    timestamp = float(tokens[0])
    can_id = _parse_hex(tokens[1], 'CAN ID', 2 ** 11)
    try:
        dlc = int(tokens[2])
    except ValueError:
        raise ValueError(f"DLC 不是整数: {tokens[2]!r}") from None
    if not 0 <= dlc <= 8:
        raise ValueError(f"DLC 超出 [0,8]: {dlc}")
    if len(tokens) != 4 + dlc:
        raise ValueError(f"DLC={dlc} 时应有 {4 + dlc} 个字段, 实际 {len(tokens)}")
    data = [_parse_hex(tok, f'DATA[{i}]', 256) for i, tok in enumerate(tokens[3:3 + dlc])]
    data.extend([0] * (8 - dlc))
    label = policy.resolve(tokens[3 + dlc])
    return timestamp, [float(can_id), float(dlc)] + [float(b) for b in data], label


def load_can_csv(
    path: Union[str, Path],
    label_policy: LabelPolicy,
    normal_labels: Sequence[str] = DEFAULT_NORMAL_LABELS,
    strict: bool = False,
    report: Optional[LoadReport] = None,
) -> LabeledDataset:
    """
    解析 CAN 帧日志

    Args:
        path: 日志路径，每行 timestamp,can_id,dlc,data*dlc,flag|label
        label_policy: 标志位/标签列的解释方式
        normal_labels: 视为正常流量的类别名
        strict: 为 True 时第一处解析错误即抛出 DataError
        report: 可选的解析报告，用于收集被拒绝的行

    Returns:
        LabeledDataset: 10 个特征（CAN ID、DLC、DATA[0..7]），时间戳单独保存
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"文件不存在: {path}")
    report = report if report is not None else LoadReport()
    report.path = str(path)

    stamps: List[float] = []
    rows: List[List[float]] = []
    names: List[str] = []
    with open(path, 'r', encoding='utf-8') as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            tokens = [tok.strip() for tok in line.split(',')]
            if lineno == 1 and any(ch.isalpha() for ch in tokens[0]):
                # 表头
                continue
            report.rows_read += 1
            try:
                stamp, values, label = _parse_can_row(tokens, label_policy)
            except ValueError as e:
                if strict:
                    raise DataError(f"{path}:{lineno}: {e}") from None
                report.reject(lineno, str(e))
                continue
            stamps.append(stamp)
            rows.append(values)
            names.append(label)

    if report.rows_rejected:
        console.print(f"⚠️  {report.summary()}", style="yellow")
        for lineno, reason in report.errors[:5]:
            console.print(f"   第{lineno}行: {reason}", style="dim")
    if not rows:
        raise DataError(f"{path}: 没有可用的 CAN 帧")

    labels, class_names, positive = encode_labels(names, normal_labels)
    return LabeledDataset(
        features=np.asarray(rows, dtype=np.float64),
        labels=labels,
        feature_names=CAN_FEATURE_NAMES,
        class_names=class_names,
        positive_classes=positive,
        timestamps=np.asarray(stamps, dtype=np.float64),
    )


def _unique_names(names: List[str]) -> List[str]:
    seen: Dict[str, int] = {}
    out = []
    for name in names:
        if name in seen:
            seen[name] += 1
            out.append(f"{name}.{seen[name]}")
        else:
            seen[name] = 0
            out.append(name)
    return out


def load_flow_csv(
    path: Union[str, Path],
    normal_labels: Sequence[str] = DEFAULT_NORMAL_LABELS,
    strict: bool = False,
    report: Optional[LoadReport] = None,
) -> LabeledDataset:
    """
    解析流量特征 CSV（CICIDS2017 风格）

    表头空白会被去除；"Infinity"/"-Infinity"/"NaN" 记号保留为非有限值，
    留给 sanitize 修复；含其他非数值单元的行被拒绝并计数。
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"文件不存在: {path}")
    report = report if report is not None else LoadReport()
    report.path = str(path)

    frame = pd.read_csv(path, dtype=str, keep_default_na=False, low_memory=False,
                        encoding_errors='replace')
    frame.columns = _unique_names([str(c).strip() for c in frame.columns])
    if LABEL_COLUMN not in frame.columns:
        raise DataError(f"{path}: 缺少标签列 {LABEL_COLUMN!r}")
    report.rows_read = len(frame)
    if frame.empty:
        raise DataError(f"{path}: 没有数据行")

    label_names = frame[LABEL_COLUMN].str.strip()
    cells = frame.drop(columns=[LABEL_COLUMN] + [c for c in FLOW_ID_COLUMNS if c in frame.columns])
    if cells.shape[1] == 0:
        raise DataError(f"{path}: 没有特征列")

    values = np.empty(cells.shape, dtype=np.float64)
    bad_rows = np.zeros(len(cells), dtype=bool)
    for j, column in enumerate(cells.columns):
        col = cells[column].str.strip()
        special = col.isin(FLOW_TOKENS.keys()).to_numpy()
        numeric = pd.to_numeric(col.where(~special, '0'), errors='coerce').to_numpy(dtype=np.float64)
        bad = np.isnan(numeric) & ~special
        if bad.any():
            for i in np.flatnonzero(bad & ~bad_rows)[:MAX_REPORTED_ERRORS]:
                if strict:
                    raise DataError(f"{path}:{i + 2}: 列 {column!r} 非数值: {col.iat[i]!r}")
                report.reject(int(i) + 2, f"列 {column!r} 非数值: {col.iat[i]!r}")
            bad_rows |= bad
        numeric[special] = col[special].map(FLOW_TOKENS).to_numpy(dtype=np.float64)
        values[:, j] = numeric

    keep = ~bad_rows
    # reject() 只记录前若干条，计数以掩码为准
    report.rows_rejected = int(bad_rows.sum())
    values = values[keep]
    report.non_finite_cells = int((~np.isfinite(values)).sum())
    if report.rows_rejected:
        console.print(f"⚠️  {report.summary()}", style="yellow")
    if values.shape[0] == 0:
        raise DataError(f"{path}: 所有数据行都被拒绝")

    labels, class_names, positive = encode_labels(label_names[keep], normal_labels)
    return LabeledDataset(
        features=values,
        labels=labels,
        feature_names=tuple(cells.columns),
        class_names=class_names,
        positive_classes=positive,
    )
