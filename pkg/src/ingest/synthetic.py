"""
合成数据生成器
在公开数据集不可用时生成 CAN 注入攻击日志与流量特征表
"""

from pathlib import Path
from typing import Dict, List, Mapping, Optional, Union

import numpy as np

CAN_ATTACKS = ('DoS', 'Fuzzy', 'Gear', 'RPM')

# 正常流量的 ID 与基础载荷；部分字节在发送时随机抖动
_NORMAL_TRAFFIC = {
    0x018: (8, [0xfe, 0x5b, 0x00, 0x00, 0x00, 0x3c, 0x00, 0x00]),
    0x034: (8, [0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00]),
    0x043: (8, [0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00]),
    0x080: (8, [0x00, 0x17, 0xea, 0x0a, 0x20, 0x1a, 0x20, 0x43]),
    0x130: (8, [0x08, 0x80, 0x00, 0xff, 0x0b, 0x80, 0x0b, 0x3f]),
    0x140: (8, [0x00, 0x00, 0x00, 0x00, 0x08, 0x2a, 0x16, 0x2d]),
    0x153: (8, [0x00, 0x21, 0x10, 0xff, 0x00, 0xff, 0x00, 0x00]),
    0x164: (8, [0x00, 0x08, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00]),
    0x18f: (8, [0xfe, 0x2c, 0x00, 0x00, 0x00, 0x3c, 0x00, 0x00]),
    0x1f1: (8, [0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00]),
    0x220: (8, [0x00, 0x00, 0x10, 0x00, 0x00, 0x00, 0x00, 0x00]),
    0x260: (8, [0x18, 0x21, 0x21, 0x30, 0x08, 0x8f, 0x6d, 0x19]),
    0x2a0: (8, [0x64, 0x00, 0x9a, 0x1d, 0x97, 0x02, 0xbd, 0x00]),
    0x2c0: (8, [0x14, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00]),
    0x316: (8, [0x05, 0x21, 0x68, 0x09, 0x21, 0x21, 0x00, 0x6f]),
    0x329: (8, [0x40, 0xb8, 0x7e, 0x0c, 0x11, 0x20, 0x00, 0x14]),
    0x350: (8, [0x05, 0x28, 0x84, 0x66, 0x6d, 0x00, 0x00, 0xa2]),
    0x370: (8, [0x00, 0x20, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00]),
    0x43f: (8, [0x00, 0x40, 0x60, 0xff, 0x7b, 0x08, 0x05, 0x00]),
    0x440: (8, [0xff, 0x00, 0x00, 0x00, 0xff, 0x08, 0x05, 0x00]),
    0x4b0: (8, [0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00]),
    0x4f0: (8, [0x00, 0x00, 0x00, 0x80, 0x00, 0x35, 0x05, 0x00]),
    0x545: (8, [0xd8, 0x00, 0x00, 0x8a, 0x00, 0x00, 0x00, 0x00]),
    0x5a0: (8, [0x00, 0x00, 0xc0, 0x00, 0x00, 0x00, 0x00, 0x00]),
    0x5f0: (2, [0x00, 0x00]),
    0x690: (8, [0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00]),
}
# 会随时间抖动的字节位置
_JITTER_SLOTS = {0x080: (1, 3), 0x130: (0, 6), 0x260: (3, 5, 7), 0x2a0: (2, 4),
                 0x316: (2, 3), 0x329: (1, 2), 0x350: (3, 4), 0x43f: (4,)}

# 欺骗攻击使用合法 ID 和固定载荷
_SPOOF_FRAMES = {
    'Gear': (0x43f, [0x01, 0x45, 0x60, 0xff, 0x65, 0x00, 0x00, 0x00]),
    'RPM': (0x316, [0x45, 0x29, 0x24, 0xff, 0x29, 0x24, 0x00, 0xff]),
}


def _normal_frame(rng: np.random.Generator, ids: List[int]) -> List[int]:
    can_id = ids[int(rng.integers(len(ids)))]
    dlc, template = _NORMAL_TRAFFIC[can_id]
    data = list(template)
    for slot in _JITTER_SLOTS.get(can_id, ()):
        data[slot] = int((data[slot] + rng.integers(0, 24)) % 256)
    return [can_id, dlc] + data


def _attack_frame(rng: np.random.Generator, attack: str) -> List[int]:
    if attack == 'DoS':
        return [0x000, 8] + [0] * 8
    if attack == 'Fuzzy':
        return [int(rng.integers(0, 2 ** 11)), 8] + [int(b) for b in rng.integers(0, 256, 8)]
    can_id, data = _SPOOF_FRAMES[attack]
    return [can_id, 8] + list(data)


def _format_can_row(stamp: float, frame: List[int], flag: str) -> str:
    can_id, dlc, data = frame[0], frame[1], frame[2:2 + frame[1]]
    fields = [f"{stamp:.6f}", f"{can_id:04x}", str(dlc)] + [f"{b:02x}" for b in data] + [flag]
    return ','.join(fields)


def write_can_attack_log(
    path: Union[str, Path],
    attack: str,
    n_frames: int = 20000,
    attack_ratio: float = 0.15,
    burst: int = 50,
    seed: int = 0,
) -> Path:
    """
    生成一个带 R/T 标志位的 CAN 注入日志

    Args:
        path: 输出路径
        attack: DoS / Fuzzy / Gear / RPM
        n_frames: 总帧数
        attack_ratio: 注入帧比例
        burst: 每次注入的连续帧数
        seed: 随机种子
    """
    if attack not in CAN_ATTACKS:
        raise ValueError(f"未知攻击类型: {attack}")
    rng = np.random.default_rng(seed)
    ids = sorted(_NORMAL_TRAFFIC)
    n_bursts = max(1, int(n_frames * attack_ratio) // burst)
    starts = set(int(s) for s in rng.choice(max(1, n_frames // burst), size=n_bursts, replace=False))
    stamp = 1478198376.0
    lines = []
    for block in range(max(1, n_frames // burst)):
        injected = block in starts
        for _ in range(burst):
            stamp += float(rng.uniform(0.0002, 0.0008))
            if injected and rng.random() < 0.8:
                lines.append(_format_can_row(stamp, _attack_frame(rng, attack), 'T'))
            else:
                lines.append(_format_can_row(stamp, _normal_frame(rng, ids), 'R'))
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text('\n'.join(lines) + '\n', encoding='utf-8')
    return path


def write_can_dataset(directory: Union[str, Path], n_frames: int = 20000, seed: int = 0) -> List[Path]:
    """为四种注入攻击各生成一个日志文件（文件名与公开数据集一致）"""
    directory = Path(directory)
    stems = {'DoS': 'DoS_dataset', 'Fuzzy': 'Fuzzy_dataset', 'Gear': 'gear_dataset', 'RPM': 'RPM_dataset'}
    return [
        write_can_attack_log(directory / f"{stems[a]}.csv", a, n_frames=n_frames, seed=seed + i)
        for i, a in enumerate(CAN_ATTACKS)
    ]


FLOW_FEATURES = (
    'Flow Duration', 'Total Fwd Packets', 'Total Backward Packets',
    'Total Length of Fwd Packets', 'Fwd Packet Length Mean', 'Bwd Packet Length Mean',
    'Flow Bytes/s', 'Flow Packets/s', 'Flow IAT Mean', 'Destination Port',
    'SYN Flag Count', 'Init_Win_bytes_forward', 'Subflow Fwd Packets', 'Idle Mean',
)

# 每类的对数尺度中心：duration, fwd pkts, bwd pkts, fwd len, fwd mean, bwd mean, iat, idle
_FLOW_PROFILES: Dict[str, Dict[str, float]] = {
    'BENIGN': dict(dur=11.0, fwd=2.0, bwd=2.0, fmean=4.5, bmean=5.0, iat=9.0, port=443, syn=0.1, win=9.0, idle=8.0),
    'DoS': dict(dur=15.5, fwd=1.8, bwd=1.5, fmean=2.0, bmean=7.5, iat=13.0, port=80, syn=0.0, win=8.0, idle=15.5),
    'PortScan': dict(dur=3.5, fwd=0.2, bwd=0.2, fmean=0.5, bmean=1.5, iat=3.0, port=-1, syn=0.9, win=7.0, idle=0.0),
    'DDoS': dict(dur=13.5, fwd=1.5, bwd=2.0, fmean=2.2, bmean=8.5, iat=11.0, port=80, syn=0.0, win=5.5, idle=13.0),
    'Bot': dict(dur=10.0, fwd=1.4, bwd=1.1, fmean=5.0, bmean=4.0, iat=8.5, port=8080, syn=0.0, win=8.3, idle=9.0),
    'Infiltration': dict(dur=14.0, fwd=3.0, bwd=3.5, fmean=4.0, bmean=6.0, iat=10.0, port=444, syn=0.2, win=9.5, idle=12.0),
}


def synthesize_flows(counts: Mapping[str, int], seed: int = 0) -> Dict[str, np.ndarray]:
    """按类别生成流量特征矩阵（列顺序同 FLOW_FEATURES）"""
    rng = np.random.default_rng(seed)
    out = {}
    for name, n in counts.items():
        p = _FLOW_PROFILES[name]
        dur = np.exp(rng.normal(p['dur'], 0.6, n))
        fwd = np.maximum(1, np.round(np.exp(rng.normal(p['fwd'], 0.4, n))))
        bwd = np.maximum(0, np.round(np.exp(rng.normal(p['bwd'], 0.4, n))))
        fmean = np.exp(rng.normal(p['fmean'], 0.5, n))
        bmean = np.exp(rng.normal(p['bmean'], 0.5, n))
        iat = np.exp(rng.normal(p['iat'], 0.7, n))
        port = np.full(n, p['port']) if p['port'] >= 0 else rng.integers(1, 65535, n).astype(float)
        syn = (rng.random(n) < p['syn']).astype(float)
        win = np.round(np.exp(rng.normal(p['win'], 0.3, n)))
        idle = np.exp(rng.normal(p['idle'], 0.8, n)) if p['idle'] > 0 else np.zeros(n)
        seconds = dur / 1e6
        out[name] = np.column_stack([
            dur, fwd, bwd, fwd * fmean, fmean, bmean,
            (fwd * fmean + bwd * bmean) / seconds, (fwd + bwd) / seconds,
            iat, port, syn, win, fwd, idle,
        ])
    return out


def write_flow_csv(
    path: Union[str, Path],
    counts: Optional[Mapping[str, int]] = None,
    seed: int = 0,
    infinity_rate: float = 0.002,
) -> Path:
    """
    生成 CICIDS2017 风格的流量 CSV

    表头带前导空格，速率列中按 infinity_rate 注入 "Infinity"/"NaN" 记号。
    """
    counts = counts or {'BENIGN': 6000, 'DoS': 1500, 'PortScan': 1200, 'DDoS': 1000,
                        'Bot': 120, 'Infiltration': 40}
    rng = np.random.default_rng(seed + 1)
    blocks = synthesize_flows(counts, seed)
    rows = []
    for name, matrix in blocks.items():
        for values in matrix:
            cells = [repr(float(v)) for v in values]
            if rng.random() < infinity_rate:
                cells[6] = 'Infinity'
                cells[7] = 'NaN' if rng.random() < 0.5 else 'Infinity'
            rows.append(','.join(cells + [name]))
    order = rng.permutation(len(rows))
    header = ','.join([' ' + name for name in FLOW_FEATURES] + [' Label'])
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(header + '\n' + '\n'.join(rows[i] for i in order) + '\n', encoding='utf-8')
    return path
