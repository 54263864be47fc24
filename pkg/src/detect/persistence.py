"""
流水线持久化
带魔数与版本号的自描述二进制容器，分段存放各组件
"""

import struct
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
from rich.console import Console

from src.detect.anomaly import AnomalyModel, ClusterLabelModel
from src.detect.pipeline import FORMAT_VERSION, PipelineModel
from src.detect.signature import StackedModel
from src.features.kpca import KernelSpec, KpcaModel
from src.features.selection import FeatureSelection
from src.learners.ensemble import EnsembleModel
from src.learners.tree import Tree, TreeHyperparams
from src.preprocess.kmeans import KMeansModel
from src.preprocess.scaler import ZScoreScaler
from src.utils.errors import DataError

console = Console(stderr=True)

MAGIC = b'MTHIDS\x00\x1a'
SECTIONS = ('scaler', 'selection', 'kpca', 'stack', 'anomaly', 'registry')


# ---------------------------------------------------------------- 值编码

def _encode(value: Any, out: List[bytes]) -> None:
    if value is None:
        out.append(b'N')
    elif isinstance(value, (bool, np.bool_)):
        out.append(b'B' + struct.pack('<B', int(value)))
    elif isinstance(value, (int, np.integer)):
        out.append(b'I' + struct.pack('<q', int(value)))
    elif isinstance(value, (float, np.floating)):
        out.append(b'F' + struct.pack('<d', float(value)))
    elif isinstance(value, str):
        raw = value.encode('utf-8')
        out.append(b'S' + struct.pack('<I', len(raw)) + raw)
    elif isinstance(value, np.ndarray):
        kind = b'f' if value.dtype.kind == 'f' else b'i'
        array = np.ascontiguousarray(value, dtype='<f8' if kind == b'f' else '<i8')
        out.append(b'A' + kind + struct.pack('<I', array.ndim) + struct.pack(f'<{array.ndim}Q', *array.shape))
        out.append(array.tobytes())
    elif isinstance(value, (list, tuple)):
        out.append(b'L' + struct.pack('<I', len(value)))
        for item in value:
            _encode(item, out)
    elif isinstance(value, dict):
        out.append(b'D' + struct.pack('<I', len(value)))
        for key, item in value.items():
            _encode(str(key), out)
            _encode(item, out)
    else:
        raise DataError(f"无法序列化的类型: {type(value).__name__}")


def encode_value(value: Any) -> bytes:
    out: List[bytes] = []
    _encode(value, out)
    return b''.join(out)


class _Reader:
    def __init__(self, data: bytes, what: str = '模型文件'):
        self.data = memoryview(data)
        self.pos = 0
        self.what = what

    def take(self, n: int) -> memoryview:
        if self.pos + n > len(self.data):
            raise DataError(f"{self.what}被截断: 需要 {n} 字节, 剩余 {len(self.data) - self.pos}")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str) -> Tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def value(self) -> Any:
        tag = bytes(self.take(1))
        if tag == b'N':
            return None
        if tag == b'B':
            return bool(self.unpack('<B')[0])
        if tag == b'I':
            return self.unpack('<q')[0]
        if tag == b'F':
            return self.unpack('<d')[0]
        if tag == b'S':
            (n,) = self.unpack('<I')
            return bytes(self.take(n)).decode('utf-8')
        if tag == b'A':
            kind = bytes(self.take(1))
            (ndim,) = self.unpack('<I')
            shape = self.unpack(f'<{ndim}Q')
            dtype = np.dtype('<f8' if kind == b'f' else '<i8')
            native = np.float64 if kind == b'f' else np.int64
            count = int(np.prod(shape)) if ndim else 1
            raw = self.take(count * dtype.itemsize)
            return np.frombuffer(raw, dtype=dtype).reshape(shape).astype(native)
        if tag == b'L':
            (n,) = self.unpack('<I')
            return [self.value() for _ in range(n)]
        if tag == b'D':
            (n,) = self.unpack('<I')
            return {self.value(): self.value() for _ in range(n)}
        raise DataError(f"{self.what}损坏: 未知的类型标记 {tag!r} (偏移 {self.pos - 1})")


def decode_value(data: bytes) -> Any:
    reader = _Reader(data)
    value = reader.value()
    if reader.pos != len(data):
        raise DataError(f"模型文件损坏: 段末尾多出 {len(data) - reader.pos} 字节")
    return value


# ---------------------------------------------------------------- 组件状态

def _tree_state(t: Tree) -> Dict[str, Any]:
    return {'feature': t.feature, 'threshold': t.threshold, 'left': t.left, 'right': t.right,
            'value': t.value, 'depth': t.depth, 'n_features': t.n_features}


def _tree_from(s: Dict[str, Any]) -> Tree:
    return Tree(s['feature'], s['threshold'], s['left'], s['right'], s['value'], s['depth'], s['n_features'])


def _ensemble_state(m: Optional[EnsembleModel]) -> Optional[Dict[str, Any]]:
    if m is None:
        return None
    return {
        'variant': m.variant,
        'n_classes': m.n_classes,
        'n_features': m.n_features,
        'trees': [_tree_state(t) for t in m.trees],
        'init_scores': m.init_scores,
        'learning_rate': m.learning_rate,
        'train_loss_trace': list(m.train_loss_trace),
    }


def _ensemble_from(s: Optional[Dict[str, Any]]) -> Optional[EnsembleModel]:
    if s is None:
        return None
    return EnsembleModel(s['variant'], s['n_classes'], s['n_features'], tuple(_tree_from(t) for t in s['trees']),
                         s['init_scores'], s['learning_rate'], tuple(s['train_loss_trace']))


def _kpca_state(k: Optional[KpcaModel]) -> Optional[Dict[str, Any]]:
    if k is None:
        return None
    return {
        'kernel': {'kind': k.kernel.kind, 'gamma': k.kernel.gamma, 'degree': k.kernel.degree,
                   'coef0': k.kernel.coef0},
        'training_rows': k.training_rows,
        'eigenvectors': k.eigenvectors,
        'eigenvalues': k.eigenvalues,
        'row_means': k.row_means,
        'grand_mean': k.grand_mean,
    }


def _kpca_from(s: Optional[Dict[str, Any]]) -> Optional[KpcaModel]:
    if s is None:
        return None
    return KpcaModel(KernelSpec(**s['kernel']), s['training_rows'], s['eigenvectors'], s['eigenvalues'],
                     s['row_means'], s['grand_mean'])


def _stack_state(st: StackedModel) -> Dict[str, Any]:
    return {
        'bases': [_ensemble_state(b) for b in st.bases],
        'meta': _ensemble_state(st.meta),
        'best_base': st.best_base,
        'meta_scheme': st.meta_scheme,
        'hyperparams': {v: hp.as_dict() for v, hp in st.hyperparams.items()},
        'base_scores': dict(st.base_scores),
    }


def _stack_from(s: Dict[str, Any]) -> StackedModel:
    return StackedModel(
        bases=tuple(_ensemble_from(b) for b in s['bases']),
        meta=_ensemble_from(s['meta']),
        best_base=s['best_base'],
        meta_scheme=s['meta_scheme'],
        hyperparams={v: TreeHyperparams(**hp) for v, hp in s['hyperparams'].items()},
        base_scores=dict(s['base_scores']),
    )


def _anomaly_state(a: Optional[AnomalyModel]) -> Optional[Dict[str, Any]]:
    if a is None:
        return None
    km = a.clusters.kmeans
    return {
        'kmeans': {'centroids': km.centroids, 'distance': km.distance, 'inertia': km.inertia,
                   'iterations_run': km.iterations_run, 'inertia_trace': list(km.inertia_trace)},
        'labels': a.clusters.labels,
        'purity': a.clusters.purity,
        'p_star': a.clusters.p_star,
        'b1': _ensemble_state(a.b1),
        'b2': _ensemble_state(a.b2),
        'best_base': a.best_base,
    }


def _anomaly_from(s: Optional[Dict[str, Any]], kpca: Optional[KpcaModel]) -> Optional[AnomalyModel]:
    if s is None:
        return None
    km = s['kmeans']
    kmeans = KMeansModel(km['centroids'], km['distance'], km['inertia'], km['iterations_run'],
                         tuple(km['inertia_trace']))
    clusters = ClusterLabelModel(kmeans, s['labels'], s['purity'], s['p_star'])
    return AnomalyModel(clusters, _ensemble_from(s['b1']), _ensemble_from(s['b2']), s['best_base'], kpca)


def _component_states(p: PipelineModel) -> Dict[str, Any]:
    sel = p.selection
    return {
        'scaler': {'means': p.scaler.means, 'stds': p.scaler.stds},
        'selection': {'importances': sel.importances, 'selected': list(sel.selected),
                      'feature_names': list(sel.feature_names), 'alpha_ig': sel.alpha_ig,
                      'alpha_su': sel.alpha_su},
        'kpca': _kpca_state(p.kpca),
        'stack': _stack_state(p.stack),
        'anomaly': _anomaly_state(p.anomaly),
        'registry': {'class_names': list(p.class_names), 'positive_classes': sorted(p.positive_classes),
                     'feature_names': list(p.feature_names), 'fill_values': p.fill_values},
    }


def _pipeline_from(states: Dict[str, Any]) -> PipelineModel:
    sel = states['selection']
    reg = states['registry']
    kpca = _kpca_from(states['kpca'])
    return PipelineModel(
        scaler=ZScoreScaler(states['scaler']['means'], states['scaler']['stds']),
        selection=FeatureSelection(sel['importances'], tuple(sel['selected']), tuple(sel['feature_names']),
                                   sel['alpha_ig'], sel['alpha_su']),
        kpca=kpca,
        stack=_stack_from(states['stack']),
        anomaly=_anomaly_from(states['anomaly'], kpca),
        class_names=tuple(reg['class_names']),
        positive_classes=frozenset(reg['positive_classes']),
        feature_names=tuple(reg['feature_names']),
        fill_values=reg['fill_values'],
    )


# ---------------------------------------------------------------- 容器

def dumps_pipeline(p: PipelineModel) -> bytes:
    """
    序列化流水线

    布局: 魔数 | u32 版本 | u32 段数 | 每段 (名称, u64 长度, 负载)；数值均为小端 64 位。
    """
    states = _component_states(p)
    parts = [MAGIC, struct.pack('<II', FORMAT_VERSION, len(SECTIONS))]
    for name in SECTIONS:
        payload = encode_value(states[name])
        parts.append(encode_value(name))
        parts.append(struct.pack('<Q', len(payload)))
        parts.append(payload)
    return b''.join(parts)


def loads_pipeline(data: bytes) -> PipelineModel:
    """反序列化流水线；魔数、版本或长度不符时抛出 DataError"""
    reader = _Reader(data)
    if bytes(reader.take(len(MAGIC))) != MAGIC:
        raise DataError("不是流水线模型文件（魔数不匹配）")
    version, count = reader.unpack('<II')
    if version != FORMAT_VERSION:
        raise DataError(f"模型格式版本不兼容: 文件为 {version}, 当前支持 {FORMAT_VERSION}")
    states: Dict[str, Any] = {}
    for _ in range(count):
        name = reader.value()
        (length,) = reader.unpack('<Q')
        states[name] = decode_value(bytes(reader.take(length)))
    missing = [name for name in SECTIONS if name not in states]
    if missing:
        raise DataError(f"模型文件缺少分段: {missing}")
    if reader.pos != len(data):
        raise DataError(f"模型文件末尾多出 {len(data) - reader.pos} 字节")
    return _pipeline_from(states)


def save_pipeline(p: PipelineModel, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = dumps_pipeline(p)
    path.write_bytes(data)
    console.print(f"💾 模型已保存: {path} ({len(data) / 1e6:.2f} MB)")
    return path


def load_pipeline(path: Union[str, Path]) -> PipelineModel:
    path = Path(path)
    if not path.exists():
        raise DataError(f"模型文件不存在: {path}")
    return loads_pipeline(path.read_bytes())
