"""
配置管理模块
加载环境变量和流水线配置文件（扁平 section.key=value 格式）
"""

import os
from pathlib import Path
from typing import Annotated, Any, Dict, List, Optional, Union

from dotenv import load_dotenv
from pydantic import BaseModel, BeforeValidator, ConfigDict, Field, ValidationError, field_validator

from src.utils.errors import ConfigError

# 加载.env文件
load_dotenv()

SIGNATURE_MODES = ('multiclass', 'binary')


class Config:
    """进程级配置类"""

    # 默认流水线配置文件
    CONFIG_PATH: Optional[str] = os.getenv('IDS_CONFIG')

    # 运行配置
    SEED: int = int(os.getenv('IDS_SEED', '0'))
    THREADS: int = int(os.getenv('IDS_THREADS', '1'))

    # 存储配置
    OUTPUT_DIR: str = os.getenv('IDS_OUTPUT_DIR', 'runs')

    @classmethod
    def ensure_directories(cls) -> Path:
        """确保输出目录存在"""
        path = Path(cls.OUTPUT_DIR)
        path.mkdir(parents=True, exist_ok=True)
        return path


def _split_list(value: Any) -> Any:
    if isinstance(value, str):
        return [item.strip() for item in value.split(',') if item.strip()]
    return value


CommaList = Annotated[List[str], BeforeValidator(_split_list)]


class _Section(BaseModel):
    model_config = ConfigDict(extra='forbid', validate_assignment=True)


class IngestSection(_Section):
    normal_labels: CommaList = Field(default_factory=lambda: ['Normal', 'BENIGN'])
    strict: bool = False
    # 标志列（R/T）文件的攻击名称，按文件名（不含扩展名）映射
    attack_names: Dict[str, str] = Field(default_factory=lambda: {
        'DoS_dataset': 'DoS',
        'Fuzzy_dataset': 'Fuzzy',
        'gear_dataset': 'Gear',
        'RPM_dataset': 'RPM',
    })


class SamplingSection(_Section):
    enabled: bool = True
    fraction: float = Field(0.1, gt=0.0, le=1.0)
    k_min: int = Field(2, ge=2)
    k_max: int = Field(20, ge=2)
    budget: int = Field(20, ge=1)
    distance: str = 'euclidean'
    minibatch_size: int = Field(4096, ge=0)
    eval_subsample: int = Field(2000, ge=10)
    max_iter: int = Field(100, ge=1)
    tol: float = Field(1e-4, ge=0.0)


class SmoteSection(_Section):
    enabled: bool = False
    k_neighbors: int = Field(5, ge=1)
    target_count: int = Field(100000, ge=1)


class FeaturesSection(_Section):
    enabled: bool = True
    alpha_ig: float = Field(0.9, gt=0.0, le=1.0)
    alpha_su: float = Field(0.9, gt=0.0, lt=1.0)
    fcbf: bool = True
    bins: int = Field(20, ge=2)
    tune_alpha: bool = False
    tune_budget: int = Field(10, ge=1)


class KpcaSection(_Section):
    kernel: str = 'rbf'
    gamma: Optional[float] = Field(None, gt=0.0)
    degree: int = Field(3, ge=1)
    coef0: float = 1.0
    n_components: int = Field(8, ge=1)
    max_rows: int = Field(2000, ge=2)
    tune: bool = False
    tune_budget: int = Field(10, ge=1)


class HpoSection(_Section):
    gp_budget: int = Field(20, ge=1)
    tpe_budget: int = Field(50, ge=1)
    n_init: int = Field(5, ge=1)
    gamma: float = Field(0.25, gt=0.0, lt=1.0)
    tpe_candidates: int = Field(24, ge=1)
    gp_candidates: int = Field(2048, ge=1)
    width: int = Field(1, ge=1)


class SignatureSection(_Section):
    # multiclass 区分每个攻击类；binary 只区分 normal/attack，训练更快
    mode: str = 'multiclass'
    tune: bool = True
    cv_folds: int = Field(10, ge=2)
    meta_features: str = 'labels'
    # variant -> param -> 'int:lo:hi' / 'real:lo:hi:log' / 'cat:a|b'
    space: Dict[str, Dict[str, str]] = Field(default_factory=dict)

    @field_validator('meta_features')
    @classmethod
    def _check_meta(cls, value: str) -> str:
        if value not in ('labels', 'proba'):
            raise ValueError("meta_features 只能是 labels 或 proba")
        return value

    @field_validator('mode')
    @classmethod
    def _check_mode(cls, value: str) -> str:
        if value not in SIGNATURE_MODES:
            raise ValueError(f"mode 只能是 {' 或 '.join(SIGNATURE_MODES)}")
        return value


class AnomalySection(_Section):
    p_star: float = Field(0.933, gt=0.5, lt=1.0)
    tune_p_star: bool = False
    k_min: int = Field(8, ge=2)
    k_max: int = Field(512, ge=2)
    distances: CommaList = Field(default_factory=lambda: ['euclidean', 'manhattan'])
    budget: int = Field(20, ge=1)
    validation_fraction: float = Field(0.2, gt=0.0, lt=1.0)
    minibatch_size: int = Field(4096, ge=0)
    max_iter: int = Field(100, ge=1)


class EvaluationSection(_Section):
    train_fraction: float = Field(0.7, gt=0.0, lt=1.0)
    stratified: bool = True
    folds: int = Field(10, ge=2)
    scope: str = 'full'


class BenchSection(_Section):
    rows: int = Field(1000, ge=1)
    warmup: int = Field(50, ge=0)
    repeats: int = Field(3, ge=1)


class PipelineConfig(_Section):
    """流水线完整配置"""

    seed: int = 0
    threads: int = Field(1, ge=1)
    ingest: IngestSection = Field(default_factory=IngestSection)
    sampling: SamplingSection = Field(default_factory=SamplingSection)
    smote: SmoteSection = Field(default_factory=SmoteSection)
    features: FeaturesSection = Field(default_factory=FeaturesSection)
    kpca: KpcaSection = Field(default_factory=KpcaSection)
    hpo: HpoSection = Field(default_factory=HpoSection)
    signature: SignatureSection = Field(default_factory=SignatureSection)
    anomaly: AnomalySection = Field(default_factory=AnomalySection)
    evaluation: EvaluationSection = Field(default_factory=EvaluationSection)
    bench: BenchSection = Field(default_factory=BenchSection)

    def with_overrides(self, **updates: Any) -> 'PipelineConfig':
        """按 section.key 形式的扁平键覆盖配置，返回新对象"""
        data = self.model_dump()
        for key, value in updates.items():
            _assign(data, key.split('.'), value, key)
        return _validate(data)


def _assign(tree: Dict[str, Any], parts: List[str], value: Any, key: str) -> None:
    node = tree
    for part in parts[:-1]:
        child = node.setdefault(part, {})
        if not isinstance(child, dict):
            raise ConfigError(f"配置键冲突: {key}")
        node = child
    node[parts[-1]] = value


def _validate(data: Dict[str, Any]) -> PipelineConfig:
    try:
        return PipelineConfig.model_validate(data)
    except ValidationError as e:
        first = e.errors()[0]
        where = '.'.join(str(p) for p in first['loc'])
        raise ConfigError(f"配置项 {where} 无效: {first['msg']}") from e


def parse_config_text(text: str) -> PipelineConfig:
    """
    解析扁平 key=value 配置文本

    Args:
        text: 配置文本，每行一个 section.key=value，# 开头为注释

    Returns:
        PipelineConfig: 校验后的配置
    """
    data: Dict[str, Any] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith('#'):
            continue
        if '=' not in line:
            raise ConfigError(f"配置第{lineno}行缺少 '=': {raw!r}")
        key, value = line.split('=', 1)
        key = key.strip()
        if not key:
            raise ConfigError(f"配置第{lineno}行键为空")
        _assign(data, key.split('.'), value.strip(), key)
    return _validate(data)


def load_pipeline_config(path: Optional[Union[str, Path]] = None) -> PipelineConfig:
    """从文件加载配置；未指定路径时使用 IDS_CONFIG 或默认值"""
    path = path or Config.CONFIG_PATH
    if not path:
        return _validate({'seed': Config.SEED, 'threads': Config.THREADS})
    config_path = Path(path)
    if not config_path.exists():
        raise ConfigError(f"配置文件不存在: {config_path}")
    return parse_config_text(config_path.read_text(encoding='utf-8'))
