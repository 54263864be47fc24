"""
数据集模型
LabeledDataset、CanFrame 与规范 CSV 导入导出
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from src.utils.errors import DataError

LABEL_COLUMN = 'Label'
DEFAULT_NORMAL_LABELS = ('Normal', 'BENIGN')
BINARY_CLASS_NAMES = ('normal', 'attack')

CAN_FEATURE_NAMES: Tuple[str, ...] = ('CAN ID', 'DLC') + tuple(f'DATA[{i}]' for i in range(8))


@dataclass(frozen=True)
class CanFrame:
    """单个 CAN 帧；data 固定 8 字节，DLC 之后补零"""

    timestamp: float
    can_id: int
    dlc: int
    data: Tuple[int, ...]
    label: str

    def __post_init__(self):
        if not 0 <= self.dlc <= 8:
            raise DataError(f"DLC 超出 [0,8]: {self.dlc}")
        if not 0 <= self.can_id < 2 ** 11:
            raise DataError(f"CAN ID 超出 11 位: {self.can_id:#x}")
        if len(self.data) != 8:
            raise DataError(f"数据槽数量必须为 8, 实际 {len(self.data)}")

    def as_features(self) -> List[float]:
        return [float(self.can_id), float(self.dlc)] + [float(b) for b in self.data]


@dataclass(frozen=True)
class SplitSpec:
    """训练/测试划分参数"""

    train_fraction: float = 0.7
    seed: int = 0
    stratified: bool = True

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise DataError(f"train_fraction 必须位于 (0,1): {self.train_fraction}")


def _readonly(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    """
    带标签的数值数据集

    features 为 n×f 的 float64 矩阵（sanitize 之前可能含非有限值），
    labels 为整数编码的类别，class_names 为类别注册表，
    positive_classes 为被视为"攻击"的类别下标集合。
    """

    features: np.ndarray
    labels: np.ndarray
    feature_names: Tuple[str, ...]
    class_names: Tuple[str, ...]
    positive_classes: FrozenSet[int]
    timestamps: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        features = np.ascontiguousarray(self.features, dtype=np.float64)
        labels = np.ascontiguousarray(self.labels, dtype=np.int64)
        if features.ndim != 2:
            raise DataError(f"特征矩阵必须是二维的, 实际 {features.ndim} 维")
        n, f = features.shape
        if n < 1 or f < 1:
            raise DataError(f"数据集不能为空: n={n}, f={f}")
        if labels.shape != (n,):
            raise DataError(f"标签长度 {labels.shape} 与行数 {n} 不一致")
        if len(self.feature_names) != f:
            raise DataError(f"特征名数量 {len(self.feature_names)} 与列数 {f} 不一致")
        if len(set(self.feature_names)) != f:
            raise DataError("特征名必须唯一")
        if len(set(self.class_names)) != len(self.class_names):
            raise DataError("类别名必须唯一")
        n_classes = len(self.class_names)
        if labels.min() < 0 or labels.max() >= n_classes:
            raise DataError(f"标签超出类别注册表范围 [0,{n_classes})")
        if any(c < 0 or c >= n_classes for c in self.positive_classes):
            raise DataError("攻击类别下标无效")
        object.__setattr__(self, 'features', _readonly(features))
        object.__setattr__(self, 'labels', _readonly(labels))
        object.__setattr__(self, 'feature_names', tuple(self.feature_names))
        object.__setattr__(self, 'class_names', tuple(self.class_names))
        object.__setattr__(self, 'positive_classes', frozenset(int(c) for c in self.positive_classes))
        if self.timestamps is not None:
            stamps = np.ascontiguousarray(self.timestamps, dtype=np.float64)
            if stamps.shape != (n,):
                raise DataError("时间戳长度与行数不一致")
            object.__setattr__(self, 'timestamps', _readonly(stamps))

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    @property
    def normal_classes(self) -> Tuple[int, ...]:
        return tuple(i for i in range(self.n_classes) if i not in self.positive_classes)

    @property
    def normal_class(self) -> int:
        """唯一的正常类下标"""
        normals = self.normal_classes
        if len(normals) != 1:
            raise DataError(f"需要恰好一个正常类, 实际 {[self.class_names[i] for i in normals]}")
        return normals[0]

    def attack_mask(self) -> np.ndarray:
        return np.isin(self.labels, sorted(self.positive_classes))

    def class_counts(self) -> Dict[str, int]:
        counts = np.bincount(self.labels, minlength=self.n_classes)
        return {name: int(c) for name, c in zip(self.class_names, counts)}

    def class_index(self, name: str) -> int:
        try:
            return self.class_names.index(name)
        except ValueError:
            raise DataError(f"类别 {name!r} 不存在, 可用类别: {list(self.class_names)}") from None

    def subset(self, indices: Union[np.ndarray, Sequence[int]]) -> 'LabeledDataset':
        """按行下标取子集，类别注册表不变"""
        idx = np.asarray(indices, dtype=np.int64)
        return LabeledDataset(
            features=self.features[idx],
            labels=self.labels[idx],
            feature_names=self.feature_names,
            class_names=self.class_names,
            positive_classes=self.positive_classes,
            timestamps=None if self.timestamps is None else self.timestamps[idx],
        )

    def with_features(self, features: np.ndarray, feature_names: Sequence[str]) -> 'LabeledDataset':
        return LabeledDataset(features, self.labels, tuple(feature_names), self.class_names,
                              self.positive_classes, self.timestamps)

    def without_class(self, name: str) -> 'LabeledDataset':
        """删除一个类别的全部行并重新编码注册表"""
        drop = self.class_index(name)
        keep = np.flatnonzero(self.labels != drop)
        if keep.size == 0:
            raise DataError(f"删除类别 {name!r} 后数据集为空")
        remap = np.full(self.n_classes, -1, dtype=np.int64)
        survivors = [i for i in range(self.n_classes) if i != drop]
        remap[survivors] = np.arange(len(survivors))
        return LabeledDataset(
            features=self.features[keep],
            labels=remap[self.labels[keep]],
            feature_names=self.feature_names,
            class_names=tuple(self.class_names[i] for i in survivors),
            positive_classes=frozenset(int(remap[c]) for c in self.positive_classes if c != drop),
            timestamps=None if self.timestamps is None else self.timestamps[keep],
        )

    def to_binary(self) -> 'LabeledDataset':
        """折叠为二分类：0 = normal, 1 = attack"""
        return LabeledDataset(
            features=self.features,
            labels=self.attack_mask().astype(np.int64),
            feature_names=self.feature_names,
            class_names=BINARY_CLASS_NAMES,
            positive_classes=frozenset({1}),
            timestamps=self.timestamps,
        )

    def equals(self, other: 'LabeledDataset') -> bool:
        return (self.feature_names == other.feature_names
                and self.class_names == other.class_names
                and self.positive_classes == other.positive_classes
                and np.array_equal(self.labels, other.labels)
                and np.array_equal(self.features, other.features, equal_nan=True))


def encode_labels(
    names: Iterable[str],
    normal_labels: Sequence[str] = DEFAULT_NORMAL_LABELS,
) -> Tuple[np.ndarray, Tuple[str, ...], FrozenSet[int]]:
    """
    将类别名编码为整数，注册表按字典序排序

    Returns:
        tuple: (整数标签, 类别注册表, 攻击类别下标集合)
    """
    values = np.asarray(list(names), dtype=object)
    registry, codes = np.unique(values.astype(str), return_inverse=True)
    class_names = tuple(str(c) for c in registry)
    normals = set(normal_labels)
    positive = frozenset(i for i, c in enumerate(class_names) if c not in normals)
    return codes.astype(np.int64), class_names, positive


def concat_datasets(
    parts: Sequence[LabeledDataset],
    normal_labels: Sequence[str] = DEFAULT_NORMAL_LABELS,
) -> LabeledDataset:
    """合并多个数据集，按类别名重新编码为统一的有序注册表"""
    if not parts:
        raise DataError("没有可合并的数据集")
    names = parts[0].feature_names
    for part in parts[1:]:
        if part.feature_names != names:
            raise DataError("待合并的数据集特征列不一致")
    label_names = np.concatenate([np.asarray(p.class_names, dtype=object)[p.labels] for p in parts])
    labels, class_names, positive = encode_labels(label_names, normal_labels)
    stamps = None
    if all(p.timestamps is not None for p in parts):
        stamps = np.concatenate([p.timestamps for p in parts])
    return LabeledDataset(
        features=np.vstack([p.features for p in parts]),
        labels=labels,
        feature_names=names,
        class_names=class_names,
        positive_classes=positive,
        timestamps=stamps,
    )


def write_canonical_csv(d: LabeledDataset, path: Union[str, Path]) -> Path:
    """导出规范 CSV：表头、完整精度的十进制特征、最后一列为类别名"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame(d.features, columns=list(d.feature_names))
    frame[LABEL_COLUMN] = np.asarray(d.class_names, dtype=object)[d.labels]
    # repr 格式保证 float64 往返无损
    frame.to_csv(path, index=False, float_format='%.17g', na_rep='nan')
    return path


def read_canonical_csv(
    path: Union[str, Path],
    normal_labels: Sequence[str] = DEFAULT_NORMAL_LABELS,
) -> LabeledDataset:
    """读取规范 CSV"""
    path = Path(path)
    if not path.exists():
        raise DataError(f"文件不存在: {path}")
    try:
        header = list(pd.read_csv(path, nrows=0).columns)
    except pd.errors.EmptyDataError:
        raise DataError(f"{path}: 文件为空") from None
    if not header or header[-1] != LABEL_COLUMN:
        raise DataError(f"{path}: 最后一列必须是 {LABEL_COLUMN}")
    # 只有特征列把 nan 视为缺失，类别名原样保留
    frame = pd.read_csv(path, float_precision='round_trip', keep_default_na=False,
                        na_values={name: ['', 'nan', 'NaN'] for name in header[:-1]})
    labels, class_names, positive = encode_labels(frame[LABEL_COLUMN].astype(str), normal_labels)
    features = frame.drop(columns=[LABEL_COLUMN]).to_numpy(dtype=np.float64)
    return LabeledDataset(features, labels, tuple(frame.columns[:-1]), class_names, positive)
