"""
命令行接口
数据导入、抽样、训练、调参、检测、验证协议与基准测试命令
"""

from pathlib import Path
from typing import Dict, List, Optional, Sequence

import click
import numpy as np
import pandas as pd
from rich.console import Console
from rich.table import Table

from src.detect.persistence import dumps_pipeline, load_pipeline, save_pipeline
from src.detect.pipeline import (
    PipelineModel,
    detect_batch,
    sample_training,
    select_features,
    train_pipeline,
)
from src.detect.signature import train_signature_tier
from src.evaluation.bench import bench_latency
from src.evaluation.metrics import MetricsReport
from src.evaluation.protocols import SCOPES, cross_validate, holdout_eval, zero_day_sweep
from src.hpo.space import TrialLedger
from src.ingest.dataset import LABEL_COLUMN, concat_datasets, read_canonical_csv, write_canonical_csv
from src.ingest.loader import LabelPolicy, LoadReport, load_can_csv, load_flow_csv
from src.ingest.sanitize import sanitize
from src.ingest.synthetic import write_can_dataset, write_flow_csv
from src.preprocess.scaler import ZScoreScaler
from src.utils.config import SIGNATURE_MODES, Config, PipelineConfig, load_pipeline_config
from src.utils.errors import DataError

# 表格与结果输出到 stdout；各模块的进度信息一律走 stderr，
# 这样 detect 不带 --out 时 stdout 只有判定 CSV，可直接管道处理
out = Console()
console = Console(stderr=True)

DETECT_CHUNK_ROWS = 10000


def _load(ctx: click.Context, path: str):
    cfg: PipelineConfig = ctx.obj
    return read_canonical_csv(path, cfg.ingest.normal_labels)


def _with_mode(cfg: PipelineConfig, mode: Optional[str]) -> PipelineConfig:
    return cfg.with_overrides(**{'signature.mode': mode}) if mode else cfg


def _write_rows(rows: List[Dict[str, object]], path: Optional[str]) -> None:
    if path:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        pd.DataFrame(rows).to_csv(path, index=False)
        console.print(f"💾 报告已保存: {path}")


def _show_report(report: MetricsReport, title: str, path: Optional[str]) -> None:
    out.print(report.to_table(title))
    out.print(report.class_table())
    _write_rows(report.to_rows(), path)


@click.group()
@click.option('--config', 'config_path', type=click.Path(dir_okay=False), default=None,
              help='流水线配置文件 (section.key=value)')
@click.option('--seed', type=int, default=None, help='随机种子')
@click.option('--threads', type=click.IntRange(min=1), default=None, help='并行线程数')
@click.pass_context
def cli(ctx: click.Context, config_path: Optional[str], seed: Optional[int], threads: Optional[int]):
    """多层混合入侵检测系统"""
    cfg = load_pipeline_config(config_path)
    overrides = {}
    if seed is not None:
        overrides['seed'] = seed
    if threads is not None:
        overrides['threads'] = threads
    ctx.obj = cfg.with_overrides(**overrides) if overrides else cfg


@cli.command()
@click.argument('inputs', nargs=-1, required=True, type=click.Path(exists=True, dir_okay=False))
@click.option('--format', 'fmt', type=click.Choice(['can', 'flow']), required=True, help='输入格式')
@click.option('--out', 'out_path', required=True, type=click.Path(dir_okay=False), help='规范 CSV 输出路径')
@click.option('--strict', is_flag=True, default=None, help='遇到第一处格式错误即失败')
@click.pass_obj
def ingest(cfg: PipelineConfig, inputs: Sequence[str], fmt: str, out_path: str, strict: Optional[bool]):
    """解析原始 CAN 日志或流量 CSV，合并后导出规范 CSV"""
    strict = cfg.ingest.strict if strict is None else strict
    normal_labels = cfg.ingest.normal_labels
    parts = []
    for path in inputs:
        report = LoadReport()
        if fmt == 'can':
            policy = LabelPolicy.for_file(path, cfg.ingest.attack_names, normal_labels[0])
            parts.append(load_can_csv(path, policy, normal_labels, strict, report))
        else:
            parts.append(load_flow_csv(path, normal_labels, strict, report))
        console.print(f"✅ {report.summary()}")
        for line, reason in report.errors:
            console.print(f"   第 {line} 行: {reason}", style="dim")
    d = concat_datasets(parts, normal_labels)
    write_canonical_csv(d, out_path)
    _show_counts(d.class_counts(), f"{out_path} ({d.n_samples} 行, {d.n_features} 个特征)")


def _show_counts(counts: Dict[str, int], title: str) -> None:
    table = Table(title=title)
    table.add_column("类别", style="cyan")
    table.add_column("样本数", justify="right")
    for name, count in counts.items():
        table.add_row(name, str(count))
    out.print(table)


@cli.command()
@click.argument('input_path', type=click.Path(exists=True, dir_okay=False))
@click.option('--out', 'out_path', required=True, type=click.Path(dir_okay=False), help='抽样结果输出路径')
@click.pass_context
def sample(ctx: click.Context, input_path: str, out_path: str):
    """清洗后做 k-means 簇抽样"""
    cfg: PipelineConfig = ctx.obj
    d = sample_training(sanitize(_load(ctx, input_path)), cfg, cfg.seed)
    write_canonical_csv(d, out_path)
    _show_counts(d.class_counts(), f"{out_path} ({d.n_samples} 行)")


@cli.command()
@click.argument('input_path', type=click.Path(exists=True, dir_okay=False))
@click.option('--model', 'model_path', required=True, type=click.Path(dir_okay=False), help='模型输出路径')
@click.option('--holdout/--no-holdout', default=True, help='按 evaluation.train_fraction 留出测试集并评估')
@click.option('--mode', type=click.Choice(SIGNATURE_MODES), default=None, help='签名检测层训练模式，默认 signature.mode')
@click.option('--scope', type=click.Choice(SCOPES), default=None, help='评估范围')
@click.option('--report', 'report_path', type=click.Path(dir_okay=False), default=None, help='CSV 报告路径')
@click.pass_context
def train(ctx: click.Context, input_path: str, model_path: str, holdout: bool, mode: Optional[str],
          scope: Optional[str], report_path: Optional[str]):
    """训练完整流水线并保存模型"""
    cfg = _with_mode(ctx.obj, mode)
    d = _load(ctx, input_path)
    scope = scope or cfg.evaluation.scope
    if holdout:
        model, report = holdout_eval(d, cfg, cfg.seed, scope)
        _show_report(report, f"留出评估 ({scope})", report_path)
    else:
        model = train_pipeline(d, cfg, cfg.seed, with_anomaly=scope == 'full')
    save_pipeline(model, model_path)


@cli.command()
@click.argument('input_path', type=click.Path(exists=True, dir_okay=False))
@click.option('--out', 'out_dir', type=click.Path(file_okay=False), default=None, help='试验记录输出目录')
@click.pass_context
def tune(ctx: click.Context, input_path: str, out_dir: Optional[str]):
    """只对签名检测层调参，输出每个基学习器的试验记录与最优超参数"""
    cfg: PipelineConfig = ctx.obj.with_overrides(**{'signature.tune': True})
    d = sanitize(_load(ctx, input_path))
    d = sample_training(d, cfg, cfg.seed)
    scaler = ZScoreScaler.fit(d.features)
    scaled = d.with_features(scaler.transform(d.features), d.feature_names)
    selection = select_features(scaled, cfg, cfg.seed)
    selected = scaled.with_features(selection.apply(scaled.features), selection.selected_names)

    ledgers: Dict[str, TrialLedger] = {}
    stack = train_signature_tier(selected, cfg, cfg.seed, ledgers)

    table = Table(title="签名检测层调参结果")
    table.add_column("学习器", style="cyan")
    table.add_column("试验数", justify="right")
    table.add_column("折外 macro-F1", justify="right")
    table.add_column("超参数")
    for variant, hp in stack.hyperparams.items():
        ledger = ledgers.get(variant)
        marker = " ⭐" if variant == stack.best_base else ""
        table.add_row(variant + marker, str(len(ledger) if ledger else 0),
                      f"{stack.base_scores[variant]:.5f}", str(hp.as_dict()))
    out.print(table)

    out_dir = Path(out_dir or Config.ensure_directories())
    out_dir.mkdir(parents=True, exist_ok=True)
    for variant, ledger in ledgers.items():
        ledger.to_csv(out_dir / f"trials_{variant}.csv")
    console.print(f"💾 试验记录已保存到: {out_dir}")


def _frame_features(frame: pd.DataFrame, model: PipelineModel) -> np.ndarray:
    if LABEL_COLUMN in frame.columns:
        frame = frame.drop(columns=[LABEL_COLUMN])
    names = list(model.feature_names)
    if all(name in frame.columns for name in names):
        frame = frame[names]
    elif frame.shape[1] != len(names):
        raise DataError(f"输入特征宽度不匹配: 期望 {len(names)}, 实际 {frame.shape[1]}")
    return frame.apply(pd.to_numeric, errors='coerce').to_numpy(dtype=np.float64)


@cli.command()
@click.argument('model_path', type=click.Path(exists=True, dir_okay=False))
@click.argument('input_path', type=click.Path(exists=True, dir_okay=False))
@click.option('--out', 'out_path', type=click.Path(dir_okay=False), default=None, help='判定输出 CSV（默认 stdout）')
def detect(model_path: str, input_path: str, out_path: Optional[str]):
    """逐行检测：输出 index,kind,class,confidence,tiers"""
    model = load_pipeline(model_path)
    sink = open(out_path, 'w', encoding='utf-8', newline='') if out_path else None
    counts: Dict[str, int] = {}
    offset = 0
    try:
        header = "index,kind,class,confidence,tiers"
        click.echo(header, file=sink)
        for frame in pd.read_csv(input_path, chunksize=DETECT_CHUNK_ROWS, skipinitialspace=True):
            frame.columns = [str(c).strip() for c in frame.columns]
            for i, v in enumerate(detect_batch(model, _frame_features(frame, model))):
                click.echo(f"{offset + i},{v.kind.value},{v.class_name or '-'},{v.confidence:.6f},"
                           f"{'-'.join(str(t) for t in v.tier_trace)}", file=sink)
                counts[v.kind.value] = counts.get(v.kind.value, 0) + 1
            offset += len(frame)
    finally:
        if sink is not None:
            sink.close()
    console.print(f"✅ 检测完成: {offset} 行, " + ", ".join(f"{k}={n}" for k, n in sorted(counts.items())))


@cli.command(name='zeroDay')
@click.argument('input_path', type=click.Path(exists=True, dir_okay=False))
@click.option('--attack', 'attacks', multiple=True, help='留出的攻击类别（可多次指定，默认全部）')
@click.option('--report', 'report_path', type=click.Path(dir_okay=False), default=None, help='CSV 报告路径')
@click.pass_context
def zero_day(ctx: click.Context, input_path: str, attacks: Sequence[str], report_path: Optional[str]):
    """零日评估：逐个留出攻击类训练，并与只用 CL-k-means 的结果对比"""
    cfg: PipelineConfig = ctx.obj
    d = _load(ctx, input_path)
    results = zero_day_sweep(d, cfg, list(attacks) or None, cfg.seed)

    table = Table(title="零日评估")
    for column in ("留出类别", "验证行数", "DR", "FAR", "F1", "F1 (CL-k-means)"):
        table.add_column(column, justify="left" if column == "留出类别" else "right")
    rows = []
    for name, r in results.items():
        table.add_row(name, str(r.validation_size), f"{r.full.detection_rate:.5f}",
                      f"{r.full.false_alarm_rate:.5f}", f"{r.full.f1:.5f}", f"{r.ablation.f1:.5f}")
        rows.append({'attack': name, 'validation_size': r.validation_size, 'train_size': r.train_size,
                     **r.full.summary(), 'ablation_f1': r.ablation.f1,
                     'ablation_detection_rate': r.ablation.detection_rate,
                     'ablation_false_alarm_rate': r.ablation.false_alarm_rate})
    if results:
        table.add_row("平均", "", f"{np.mean([r.full.detection_rate for r in results.values()]):.5f}",
                      f"{np.mean([r.full.false_alarm_rate for r in results.values()]):.5f}",
                      f"{np.mean([r.full.f1 for r in results.values()]):.5f}",
                      f"{np.mean([r.ablation.f1 for r in results.values()]):.5f}", style="bold")
    out.print(table)
    _write_rows(rows, report_path)


@cli.command()
@click.argument('input_path', type=click.Path(exists=True, dir_okay=False))
@click.option('--folds', type=click.IntRange(min=2), default=None, help='折数，默认 evaluation.folds')
@click.option('--mode', type=click.Choice(SIGNATURE_MODES), default=None, help='签名检测层训练模式，默认 signature.mode')
@click.option('--scope', type=click.Choice(SCOPES), default=None, help='评估范围')
@click.option('--report', 'report_path', type=click.Path(dir_okay=False), default=None, help='CSV 报告路径')
@click.pass_context
def cv(ctx: click.Context, input_path: str, folds: Optional[int], mode: Optional[str], scope: Optional[str],
       report_path: Optional[str]):
    """分层 k 折交叉验证"""
    cfg = _with_mode(ctx.obj, mode)
    report = cross_validate(_load(ctx, input_path), cfg, folds, scope, cfg.seed)
    _show_report(report, f"交叉验证 ({int(report.extras['folds'])} 折)", report_path)


@cli.command()
@click.argument('model_path', type=click.Path(exists=True, dir_okay=False))
@click.argument('input_path', type=click.Path(exists=True, dir_okay=False))
@click.option('--rows', type=click.IntRange(min=1), default=None, help='计时行数，默认 bench.rows')
@click.option('--warmup', type=click.IntRange(min=0), default=None, help='预热行数，默认 bench.warmup')
@click.option('--repeats', type=click.IntRange(min=1), default=None, help='重复轮数，默认 bench.repeats')
@click.option('--report', 'report_path', type=click.Path(dir_okay=False), default=None, help='CSV 报告路径')
@click.pass_context
def bench(ctx: click.Context, model_path: str, input_path: str, rows: Optional[int], warmup: Optional[int],
          repeats: Optional[int], report_path: Optional[str]):
    """逐行检测延迟与模型大小"""
    cfg: PipelineConfig = ctx.obj
    model = load_pipeline(model_path)
    d = _load(ctx, input_path)
    n = min(rows or cfg.bench.rows, d.n_samples)
    picked = np.random.default_rng(cfg.seed).choice(d.n_samples, size=n, replace=False)
    X = d.features[np.sort(picked)]
    report = bench_latency(model, X, cfg.bench.warmup if warmup is None else warmup, repeats or cfg.bench.repeats)
    out.print(report.to_table())
    _write_rows(report.to_rows(), report_path)


@cli.command()
@click.argument('model_path', type=click.Path(exists=True, dir_okay=False))
def inspect(model_path: str):
    """查看模型组成"""
    model = load_pipeline(model_path)
    table = Table(title=f"模型 {model_path} (格式版本 {model.format_version})")
    table.add_column("组件", style="cyan")
    table.add_column("说明")
    table.add_row("类别", ", ".join(
        f"{name}{'*' if i in model.positive_classes else ''}" for i, name in enumerate(model.class_names)))
    table.add_row("特征", f"{model.n_features} -> {model.selection.n_selected}: "
                          f"{', '.join(model.selection.selected_names)}")
    stack = model.stack
    for base in stack.bases:
        table.add_row(f"基学习器 {base.variant}", f"{base.n_trees} 棵树, 折外 macro-F1 "
                                                  f"{stack.base_scores[base.variant]:.5f}")
    table.add_row("元学习器", f"{stack.best_base} ({stack.meta_scheme}), {stack.meta.n_trees} 棵树")
    if model.kpca is not None:
        table.add_row("KPCA", f"{model.kpca.kernel.kind}, p={model.kpca.p}, {len(model.kpca.training_rows)} 行")
    if model.anomaly is not None:
        clm = model.anomaly.clusters
        table.add_row("CL-k-means", f"k={clm.k}, {clm.kmeans.distance}, p*={clm.p_star:.3f}, "
                                    f"攻击簇 {int(clm.labels.sum())}")
        table.add_row("偏置分类器", f"B1={'有' if model.anomaly.b1 else '无'}, B2={'有' if model.anomaly.b2 else '无'}")
    table.add_row("序列化大小", f"{len(dumps_pipeline(model)) / 1e6:.3f} MB")
    out.print(table)


@cli.command()
@click.option('--kind', type=click.Choice(['can', 'flow']), required=True, help='数据类型')
@click.option('--out', 'out_dir', required=True, type=click.Path(file_okay=False), help='输出目录')
@click.option('--frames', type=click.IntRange(min=100), default=20000, help='每个 CAN 日志的帧数')
@click.pass_obj
def synth(cfg: PipelineConfig, kind: str, out_dir: str, frames: int):
    """生成合成数据集（公开数据集不可用时使用）"""
    if kind == 'can':
        paths = write_can_dataset(out_dir, frames, cfg.seed)
    else:
        paths = [write_flow_csv(Path(out_dir) / 'flows.csv', seed=cfg.seed)]
    for path in paths:
        console.print(f"✅ 已生成: {path}")
