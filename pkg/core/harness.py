"""
实验编排

训练代理模型包、按模式重复运行优化器、汇总统计表和收敛曲线数据。
输出目录结构：

    <out>/dataset.csv (+ dataset.schema.json)
    <out>/bundle/manifest.json, bundle/models/*.npz, bundle/metrics.csv
    <out>/traces/<mode>_<run>.csv / .json
    <out>/summary.json, summary.csv, convergence.csv
"""

from __future__ import annotations

import glob
import hashlib
import json
import logging
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .circuit import ProblemSpec
from .errors import BundleFormatError, ConfigError, TrainingError
from .evaluator import check_evaluator_matches, make_evaluator
from .external import ExternalSimConfig
from .optimizer import GaConfig, GateMode, MODES, RunTrace, run
from .problems import resolve_problem, weighted_problem
from .sampling import Dataset, build_database, dataset_hash, save_dataset, split
from .surrogate import (
    ForestSpec, MlpSpec, Regressor, Scaler, SurrogateBundle, accuracy, fit_mlp, fit_rf,
    grid_search, load_bundle, mae, predict_mlp, r2, save_bundle,
)
from .surrogate.bundle import MANIFEST_NAME, forward_transform

logger = logging.getLogger(__name__)

# 跨越多个数量级的指标在 log10 空间中训练回归模型
LOG_METRICS = ("noise", "ugb", "f3db", "slew_rate", "power")

EVALUATOR_KINDS = ("analytic", "external")
GRID_FAMILIES = ("mlp_classifier", "mlp_regressor", "rf")


def _env_int(name: str, default: int) -> int:
    try:
        return int(os.environ.get(name, default))
    except ValueError:
        raise ConfigError(f"环境变量 {name} 必须是整数", name) from None


def default_output_dir() -> str:
    return os.environ.get("SIZER_OUTPUT_DIR", "outputs")


def default_workers() -> int:
    return _env_int("SIZER_WORKERS", 1)


# ============================================
# 配置
# ============================================

@dataclass(frozen=True)
class TrainingConfig:
    train_fraction: float = 0.8
    k_folds: int = 3
    classifier: MlpSpec = field(default_factory=lambda: MlpSpec(task="classifier"))
    regressor: MlpSpec = field(default_factory=lambda: MlpSpec(task="regressor"))
    forest: ForestSpec = field(default_factory=ForestSpec)
    grids: Mapping[str, Mapping[str, Sequence[Any]]] = field(default_factory=dict)

    def __post_init__(self):
        if not 0 < self.train_fraction < 1:
            raise ConfigError("必须在 (0, 1) 内", "training.train_fraction")
        if self.k_folds < 2:
            raise ConfigError("必须 ≥ 2", "training.k_folds")
        if self.classifier.task != "classifier":
            raise ConfigError("分类器的 task 必须为 classifier", "training.classifier.task")
        if self.regressor.task != "regressor":
            raise ConfigError("回归模型的 task 必须为 regressor", "training.regressor.task")
        for family in self.grids:
            if family not in GRID_FAMILIES:
                raise ConfigError(f"未知模型类型，可选: {', '.join(GRID_FAMILIES)}",
                                  f"training.grids.{family}")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "train_fraction": self.train_fraction,
            "k_folds": self.k_folds,
            "classifier": self.classifier.to_dict(),
            "regressor": self.regressor.to_dict(),
            "forest": self.forest.to_dict(),
            "grids": {k: {p: list(v) for p, v in g.items()} for k, g in self.grids.items()},
        }


@dataclass(frozen=True)
class ExperimentConfig:
    """
    一次对比实验的完整配置

    problem 为内置问题名或问题文件 (.json) 路径。weights 给出时改用
    alpha·面积 + beta·功耗 的加权目标。
    """
    problem: str
    modes: Tuple[GateMode, ...] = (GateMode.SGA, GateMode.MGA, GateMode.MGA_MLSP, GateMode.MGA_MLSCP)
    runs: int = 20
    ga: GaConfig = field(default_factory=GaConfig)
    evaluator: str = "analytic"
    external: Optional[ExternalSimConfig] = None
    database_size: int = 2000
    bundle_path: Optional[str] = None
    train_if_missing: bool = True
    output_dir: str = field(default_factory=default_output_dir)
    master_seed: int = 0
    workers: int = field(default_factory=default_workers)
    parallel_runs: bool = False
    training: TrainingConfig = field(default_factory=TrainingConfig)
    weights: Optional[Mapping[str, float]] = None

    def __post_init__(self):
        object.__setattr__(self, "modes", tuple(GateMode(m) for m in self.modes))
        if not self.modes:
            raise ConfigError("至少需要一个模式", "modes")
        if len(set(self.modes)) != len(self.modes):
            raise ConfigError("模式不能重复", "modes")
        if self.runs < 1:
            raise ConfigError("必须 ≥ 1", "runs")
        if self.evaluator not in EVALUATOR_KINDS:
            raise ConfigError(f"可选: {', '.join(EVALUATOR_KINDS)}", "evaluator.kind")
        if self.evaluator == "external" and self.external is None:
            raise ConfigError("外部评估器需要 external 配置", "evaluator.external")
        if self.database_size < 0:
            raise ConfigError("不能为负", "database_size")
        if self.workers < 1:
            raise ConfigError("必须 ≥ 1", "workers")
        if self.needs_bundle and not self.has_bundle and not (self.train_if_missing and self.database_size > 0):
            raise ConfigError("ML 门控模式需要已有模型包，或允许训练且 database_size > 0", "bundle_path")

    @property
    def needs_bundle(self) -> bool:
        return any(m.uses_classifier for m in self.modes)

    @property
    def has_bundle(self) -> bool:
        return bool(self.bundle_path) and os.path.isfile(os.path.join(self.bundle_path, MANIFEST_NAME))

    def resolved_bundle_path(self) -> str:
        return self.bundle_path or os.path.join(self.output_dir, "bundle")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "problem": self.problem,
            "modes": [m.value for m in self.modes],
            "runs": self.runs,
            "ga": self.ga.to_dict(),
            "evaluator": {"kind": self.evaluator,
                          "external": self.external.to_dict() if self.external else None},
            "database_size": self.database_size,
            "bundle_path": self.bundle_path,
            "train_if_missing": self.train_if_missing,
            "master_seed": self.master_seed,
            "parallel_runs": self.parallel_runs,
            "training": self.training.to_dict(),
            "weights": dict(self.weights) if self.weights else None,
        }


def _section(data: Mapping[str, Any], name: str, allowed: Sequence[str]) -> Dict[str, Any]:
    section = data.get(name) or {}
    if not isinstance(section, Mapping):
        raise ConfigError("必须是对象", name)
    unknown = [k for k in section if k not in allowed]
    if unknown:
        raise ConfigError(f"未知字段 {', '.join(unknown)}", f"{name}.{unknown[0]}")
    return dict(section)


def _spec_from(data: Optional[Mapping[str, Any]], factory: Callable, path: str, **fixed):
    if data is None:
        return factory(**fixed)
    try:
        return factory(**{**data, **fixed})
    except TypeError as exc:
        raise ConfigError(f"字段错误: {exc}", path) from exc
    except ValueError as exc:
        raise ConfigError(str(exc), path) from exc


_TOP_LEVEL = ("problem", "modes", "runs", "ga", "evaluator", "database_size", "bundle_path",
              "train_if_missing", "output_dir", "master_seed", "workers", "parallel_runs",
              "training", "weights")


def config_from_dict(data: Mapping[str, Any], seed: Optional[int] = None,
                     workers: Optional[int] = None, out: Optional[str] = None) -> ExperimentConfig:
    """
    从 JSON 字典构造实验配置；seed/workers/out 为命令行覆盖值

    Raises:
        ConfigError: field 为出错字段的点分路径
    """
    if not isinstance(data, Mapping):
        raise ConfigError("配置必须是 JSON 对象")
    unknown = [k for k in data if k not in _TOP_LEVEL]
    if unknown:
        raise ConfigError("未知字段", unknown[0])
    if "problem" not in data:
        raise ConfigError("缺少必填字段", "problem")

    n_workers = workers if workers is not None else int(data.get("workers", default_workers()))
    ga_data = _section(data, "ga", GaConfig.__dataclass_fields__)
    ga_data.setdefault("workers", n_workers)
    if workers is not None:
        ga_data["workers"] = workers
    try:
        ga = GaConfig(**ga_data)
    except TypeError as exc:
        raise ConfigError(f"字段错误: {exc}", "ga") from exc

    evaluator = _section(data, "evaluator", ("kind", "external"))
    external = None
    if evaluator.get("external"):
        external = ExternalSimConfig.from_dict(evaluator["external"])

    training_data = _section(data, "training", TrainingConfig.__dataclass_fields__)
    training = TrainingConfig(
        train_fraction=float(training_data.get("train_fraction", 0.8)),
        k_folds=int(training_data.get("k_folds", 3)),
        classifier=_spec_from(training_data.get("classifier"), MlpSpec, "training.classifier",
                              task="classifier"),
        regressor=_spec_from(training_data.get("regressor"), MlpSpec, "training.regressor",
                             task="regressor"),
        forest=_spec_from(training_data.get("forest"), ForestSpec, "training.forest"),
        grids=dict(training_data.get("grids", {})),
    )

    weights = data.get("weights")
    if weights is not None:
        for key in ("alpha", "beta"):
            if key not in weights:
                raise ConfigError("缺少必填字段", f"weights.{key}")

    modes = data.get("modes", MODES)
    if isinstance(modes, str) or not isinstance(modes, Sequence):
        raise ConfigError("必须是模式名列表", "modes")
    for i, m in enumerate(modes):
        if m not in MODES:
            raise ConfigError(f"未知模式 '{m}'，可选: {', '.join(MODES)}", f"modes[{i}]")

    try:
        return ExperimentConfig(
            problem=str(data["problem"]),
            modes=tuple(modes),
            runs=int(data.get("runs", 20)),
            ga=ga,
            evaluator=evaluator.get("kind", "analytic"),
            external=external,
            database_size=int(data.get("database_size", 2000)),
            bundle_path=data.get("bundle_path"),
            train_if_missing=bool(data.get("train_if_missing", True)),
            output_dir=out or data.get("output_dir") or default_output_dir(),
            master_seed=int(seed if seed is not None else data.get("master_seed", 0)),
            workers=n_workers,
            parallel_runs=bool(data.get("parallel_runs", False)),
            training=training,
            weights=weights,
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc


def load_config(path: str, **overrides) -> ExperimentConfig:
    if not os.path.isfile(path):
        raise ConfigError(f"配置文件不存在: {path}", "config")
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"JSON 解析失败 (第 {exc.lineno} 行): {exc.msg}", "config") from exc
    logger.info(f"已加载实验配置: {path}")
    return config_from_dict(data, **overrides)


def derive_seed(master: int, label: str, index: int) -> int:
    """第 index 次运行的种子 = sha256("master:label:index") 的前 8 个十六进制位"""
    digest = hashlib.sha256(f"{master}:{label}:{index}".encode("utf-8")).hexdigest()
    return int(digest[:8], 16)


def resolve_experiment_problem(cfg: ExperimentConfig) -> ProblemSpec:
    problem, _ = resolve_problem(cfg.problem)
    if cfg.weights:
        problem = weighted_problem(problem, float(cfg.weights["alpha"]), float(cfg.weights["beta"]),
                                   cfg.weights.get("power_limit"))
    return problem


def _evaluator_for(cfg: ExperimentConfig, problem: ProblemSpec):
    evaluator = make_evaluator(problem, cfg.evaluator, cfg.external)
    check_evaluator_matches(problem, evaluator)
    return evaluator


# ============================================
# 数据库与模型训练
# ============================================

def sample_database(cfg: ExperimentConfig, problem: Optional[ProblemSpec] = None) -> Tuple[Dataset, int]:
    """生成并保存训练数据库，返回 (数据集, 评估调用次数)"""
    problem = problem or resolve_experiment_problem(cfg)
    if cfg.database_size < 1:
        raise ConfigError("生成数据库需要 database_size ≥ 1", "database_size")
    evaluator = _evaluator_for(cfg, problem)
    dataset = build_database(problem, evaluator, cfg.database_size,
                             derive_seed(cfg.master_seed, "database", 0), cfg.workers)
    os.makedirs(cfg.output_dir, exist_ok=True)
    save_dataset(dataset, os.path.join(cfg.output_dir, "dataset.csv"))
    return dataset, evaluator.call_count()


@dataclass
class TrainingReport:
    bundle: SurrogateBundle
    metrics: List[Dict[str, Any]]
    dataset: Dataset
    database_calls: int
    bundle_path: Optional[str] = None


def _pick_spec(family: str, base, X, y, training: TrainingConfig, seed: int):
    grid = training.grids.get(family)
    if not grid:
        return base
    result = grid_search(family, grid, X, y, training.k_folds, seed, base)
    logger.info(f"{family} 网格搜索最优参数 {result.best_params}，CV 得分 {result.best_score:.4f}")
    return result.best_spec


def _map(fn: Callable, items: Sequence, workers: int) -> List:
    if workers > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


def fit_bundle(problem: ProblemSpec, dataset: Dataset, training: TrainingConfig,
               seed: int, workers: int = 1) -> Tuple[SurrogateBundle, List[Dict[str, Any]]]:
    """
    在数据集上训练全部饱和分类器与受控约束回归模型

    Returns:
        (模型包, 测试指标表)。指标表每行对应一个模型：分类器给出 accuracy，
        回归模型给出 r2 与 mae（原始单位）。
    """
    train, test = split(dataset, training.train_fraction, seed)
    if train.n == 0:
        raise TrainingError("训练集为空")
    scaler = Scaler.fit(train.features, dataset.variables)
    Z_train = scaler.transform(train.features)
    Z_test = scaler.transform(test.features) if test.n else None

    def train_classifier(item: Tuple[int, str]):
        i, key = item
        start = time.perf_counter()
        y = train.labels[key].astype(float)
        spec = _pick_spec("mlp_classifier", training.classifier, train.features, y, training,
                          seed + i)
        model = fit_mlp(spec, Z_train, y, seed + i)
        elapsed = time.perf_counter() - start
        acc = None
        if Z_test is not None:
            acc = accuracy(predict_mlp(model, Z_test) >= 0.5, test.labels[key])
        logger.info(f"分类器 {key} {spec.label}: 测试准确率 {acc}")
        return key, model, {"role": "classifier", "key": key, "model": spec.label,
                            "training_time": round(elapsed, 3), "accuracy": acc}

    def train_regressor(item: Tuple[int, Any]):
        i, constraint = item
        key = constraint.key
        start = time.perf_counter()
        rows = train.regression_rows(key)
        if int(rows.sum()) < 2:
            raise TrainingError(f"指标 {key} 可用于训练的样本不足 ({int(rows.sum())} 行)")
        y = train.targets[key][rows]
        transform = "log10" if constraint.metric in LOG_METRICS and np.all(y > 0) else "identity"
        y_fit = forward_transform(transform, y)
        model_seed = seed + 1000 + i
        if constraint.surrogate == "rf":
            base = replace(training.forest, rng_seed=model_seed)
            spec = _pick_spec("rf", base, train.features[rows], y_fit, training, model_seed)
            regressor = Regressor("rf", fit_rf(spec, train.features[rows], y_fit), transform)
        else:
            spec = _pick_spec("mlp_regressor", training.regressor, train.features[rows], y_fit,
                              training, model_seed)
            regressor = Regressor("mlp", fit_mlp(spec, Z_train[rows], y_fit, model_seed), transform)
        elapsed = time.perf_counter() - start
        row = {"role": "regressor", "key": key, "model": regressor.label, "transform": transform,
               "training_time": round(elapsed, 3), "r2": None, "mae": None}
        test_rows = test.regression_rows(key) if test.n else None
        if test_rows is not None and test_rows.any():
            pred = regressor.predict(test.features[test_rows], scaler)
            truth = test.targets[key][test_rows]
            row["r2"], row["mae"] = r2(pred, truth), mae(pred, truth)
        logger.info(f"回归模型 {key} {regressor.label}: 测试 R² {row['r2']}, MAE {row['mae']}")
        return key, regressor, row

    classified = _map(train_classifier, list(enumerate(problem.saturation_keys())), workers)
    regressed = _map(train_regressor, list(enumerate(problem.gated_constraints)), workers)

    metrics = [row for _, _, row in classified] + [row for _, _, row in regressed]
    bundle = SurrogateBundle(
        problem=problem.name,
        variables=problem.variable_names,
        scaler=scaler,
        classifiers={key: model for key, model, _ in classified},
        regressors={key: reg for key, reg, _ in regressed},
        provenance={
            "dataset_hash": dataset_hash(dataset),
            "dataset_size": dataset.n,
            "dataset_seed": dataset.seed,
            "split_seed": seed,
            "train_fraction": training.train_fraction,
            "classifier_spec": training.classifier.to_dict(),
            "regressor_spec": training.regressor.to_dict(),
            "forest_spec": training.forest.to_dict(),
            "transforms": {key: reg.transform for key, reg, _ in regressed},
        },
        metrics=metrics,
    )
    return bundle, metrics


def train_models(cfg: ExperimentConfig, problem: Optional[ProblemSpec] = None,
                 save: bool = True) -> TrainingReport:
    """
    生成数据库 → 80/20 划分 → (网格搜索) → 训练 → 测试指标 → 保存模型包
    """
    problem = problem or resolve_experiment_problem(cfg)
    dataset, calls = sample_database(cfg, problem)
    bundle, metrics = fit_bundle(problem, dataset, cfg.training,
                                 derive_seed(cfg.master_seed, "training", 0), cfg.workers)
    path = None
    if save:
        path = cfg.resolved_bundle_path()
        save_bundle(bundle, path)
        pd.DataFrame(metrics).to_csv(os.path.join(path, "metrics.csv"), index=False)
    logger.info(f"模型训练完成: {len(bundle.classifiers)} 个分类器, {len(bundle.regressors)} 个回归模型, "
                f"数据库评估 {calls} 次")
    return TrainingReport(bundle, metrics, dataset, calls, path)


def obtain_bundle(cfg: ExperimentConfig, problem: ProblemSpec) -> Tuple[SurrogateBundle, int]:
    """已有模型包则直接加载（0 次训练调用），否则按配置训练"""
    if cfg.has_bundle:
        bundle = load_bundle(cfg.bundle_path)
        if bundle.problem != problem.name:
            raise ConfigError(f"模型包属于问题 {bundle.problem}，当前问题为 {problem.name}", "bundle_path")
        return bundle, 0
    if not cfg.train_if_missing:
        raise BundleFormatError(f"模型包不存在: {cfg.bundle_path}")
    report = train_models(cfg, problem)
    return report.bundle, report.database_calls


# ============================================
# 实验与汇总
# ============================================

@dataclass
class ModeSummary:
    mode: str
    runs: int
    best: Optional[float]
    worst: Optional[float]
    mean: Optional[float]
    sd: Optional[float]
    mean_calls: float
    median_calls: float
    infeasible_runs: int

    @classmethod
    def from_traces(cls, mode: str, traces: Sequence[RunTrace]) -> "ModeSummary":
        fitness = np.array([t.best_fitness for t in traces if t.feasible], dtype=float)
        calls = np.array([t.total_calls for t in traces], dtype=float)
        if fitness.size:
            best, worst, mean = float(fitness.min()), float(fitness.max()), float(fitness.mean())
            sd = float(fitness.std(ddof=1)) if fitness.size > 1 else 0.0
        else:
            best = worst = mean = sd = None
        return cls(mode, len(traces), best, worst, mean, sd, float(calls.mean()),
                   float(np.median(calls)), len(traces) - int(fitness.size))

    def as_dict(self) -> Dict[str, Any]:
        return {
            "mode": self.mode, "runs": self.runs, "best": self.best, "worst": self.worst,
            "mean": self.mean, "sd": self.sd, "mean_calls": self.mean_calls,
            "median_calls": self.median_calls, "infeasible_runs": self.infeasible_runs,
        }


def _reduction(base: float, value: float) -> Optional[float]:
    if base <= 0:
        return None
    return (base - value) / base * 100.0


@dataclass
class SummaryTable:
    problem: str
    rows: Dict[str, ModeSummary]
    database_calls: int = 0
    master_seed: int = 0

    def reductions(self) -> Dict[str, Dict[str, Optional[float]]]:
        """各模式相对 SGA、以及 MGA_MLSCP 相对 MGA 的评估调用减少百分比"""
        pairs = []
        if GateMode.SGA.value in self.rows:
            pairs += [(m, GateMode.SGA.value) for m in self.rows if m != GateMode.SGA.value]
        if GateMode.MGA.value in self.rows and GateMode.MGA_MLSCP.value in self.rows:
            pairs.append((GateMode.MGA_MLSCP.value, GateMode.MGA.value))
        out = {}
        for mode, base in pairs:
            out[f"{mode}_vs_{base}"] = {
                "mean": _reduction(self.rows[base].mean_calls, self.rows[mode].mean_calls),
                "median": _reduction(self.rows[base].median_calls, self.rows[mode].median_calls),
            }
        return out

    def to_dict(self) -> Dict[str, Any]:
        return {
            "problem": self.problem,
            "master_seed": self.master_seed,
            "database_calls": self.database_calls,
            "modes": {m: row.as_dict() for m, row in self.rows.items()},
            "reductions": self.reductions(),
        }

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame([row.as_dict() for row in self.rows.values()])
        frame["database_calls"] = self.database_calls
        return frame

    def write(self, out_dir: str) -> None:
        with open(os.path.join(out_dir, "summary.json"), "w", encoding="utf-8") as f:
            json.dump(_jsonable(self.to_dict()), f, ensure_ascii=False, indent=2, sort_keys=True)
        self.to_frame().to_csv(os.path.join(out_dir, "summary.csv"), index=False)


def _jsonable(value):
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def format_reductions(table: SummaryTable) -> List[str]:
    lines = []
    for name, values in table.reductions().items():
        mean = "n/a" if values["mean"] is None else f"{values['mean']:.1f}%"
        median = "n/a" if values["median"] is None else f"{values['median']:.1f}%"
        lines.append(f"{name}: 评估调用减少 {mean} (均值), {median} (中位数)")
    return lines


def _trace_stem(mode: GateMode, index: int) -> str:
    return f"{mode.value}_{index}"


def write_trace(trace: RunTrace, traces_dir: str, index: int) -> None:
    stem = os.path.join(traces_dir, _trace_stem(trace.mode, index))
    trace.to_csv(f"{stem}.csv")
    trace.to_json(f"{stem}.json")


def optimize_once(cfg: ExperimentConfig, mode: Optional[Union[str, GateMode]] = None,
                  bundle: Optional[SurrogateBundle] = None) -> RunTrace:
    """单次优化，写出 traces/<mode>_0.csv/.json"""
    problem = resolve_experiment_problem(cfg)
    mode = GateMode(mode or cfg.modes[0])
    if mode.uses_classifier and bundle is None:
        bundle, _ = obtain_bundle(replace(cfg, modes=(mode,)), problem)
    ga = replace(cfg.ga, mode=mode, seed=derive_seed(cfg.master_seed, mode.value, 0))
    trace = run(problem, _evaluator_for(cfg, problem), ga, bundle)
    traces_dir = os.path.join(cfg.output_dir, "traces")
    os.makedirs(traces_dir, exist_ok=True)
    write_trace(trace, traces_dir, 0)
    return trace


def run_experiment(cfg: ExperimentConfig, bundle: Optional[SurrogateBundle] = None) -> SummaryTable:
    """
    按配置对每个模式重复运行 R 次并汇总

    ML 模式共用一个模型包（已有则加载，否则训练一次）。数据库生成的评估调用
    单独记在 database_calls 中，不计入各模式的调用数。
    """
    problem = resolve_experiment_problem(cfg)
    _evaluator_for(cfg, problem)
    traces_dir = os.path.join(cfg.output_dir, "traces")
    os.makedirs(traces_dir, exist_ok=True)

    database_calls = 0
    if cfg.needs_bundle and bundle is None:
        bundle, database_calls = obtain_bundle(cfg, problem)

    jobs = [(mode, r) for mode in cfg.modes for r in range(cfg.runs)]

    def execute(job: Tuple[GateMode, int]) -> RunTrace:
        mode, r = job
        ga = replace(cfg.ga, mode=mode, seed=derive_seed(cfg.master_seed, mode.value, r))
        trace = run(problem, _evaluator_for(cfg, problem), ga, bundle if mode.uses_classifier else None)
        write_trace(trace, traces_dir, r)
        return trace

    logger.info(f"开始实验 {problem.name}: 模式 {', '.join(m.value for m in cfg.modes)}, "
                f"每个模式 {cfg.runs} 次")
    traces = _map(execute, jobs, cfg.workers if cfg.parallel_runs else 1)

    by_mode: Dict[str, List[RunTrace]] = {}
    for (mode, _), trace in zip(jobs, traces):
        by_mode.setdefault(mode.value, []).append(trace)
    table = SummaryTable(problem.name, {m: ModeSummary.from_traces(m, ts) for m, ts in by_mode.items()},
                         database_calls, cfg.master_seed)
    table.write(cfg.output_dir)
    convergence_by_mode(by_mode).to_csv(os.path.join(cfg.output_dir, "convergence.csv"), index=False)
    for line in format_reductions(table):
        logger.info(line)
    logger.info(f"实验结果已写入 {cfg.output_dir}")
    return table


# ============================================
# 收敛曲线
# ============================================

def _curve(trace: Union[RunTrace, pd.DataFrame]) -> pd.Series:
    frame = trace.to_frame() if isinstance(trace, RunTrace) else trace
    curve = frame.groupby("cum_calls", sort=True)["best_fitness"].last()
    return curve.astype(float)


def report_convergence(traces: Mapping[str, Union[RunTrace, pd.DataFrame]]) -> pd.DataFrame:
    """
    把多条收敛曲线（最优适应度 vs 累计评估调用）对齐到共同的调用数网格

    网格为各曲线调用数的并集；每条曲线在网格点上取不晚于该点的最后一次观测值，
    在其第一次观测之前为空。
    """
    if not traces:
        raise ValueError("没有可用的运行记录")
    curves = {label: _curve(t) for label, t in traces.items()}
    grid = sorted(set().union(*(c.index for c in curves.values())))
    frame = pd.DataFrame({"cum_calls": grid})
    for label, curve in curves.items():
        frame[label] = curve.reindex(grid, method="ffill").to_numpy()
    return frame


def convergence_by_mode(traces_by_mode: Mapping[str, Sequence[Union[RunTrace, pd.DataFrame]]]) -> pd.DataFrame:
    """每个模式一列：同一网格上各次运行的中位数"""
    labelled = {f"{mode}_{i}": t for mode, ts in traces_by_mode.items() for i, t in enumerate(ts)}
    aligned = report_convergence(labelled)
    out = aligned[["cum_calls"]].copy()
    for mode, ts in traces_by_mode.items():
        columns = [f"{mode}_{i}" for i in range(len(ts))]
        values = aligned[columns].replace([np.inf, -np.inf], np.nan)
        out[mode] = values.median(axis=1, skipna=True)
    return out


def load_traces(traces_dir: str) -> Dict[str, List[pd.DataFrame]]:
    """读取 traces/<mode>_<run>.csv，按模式分组（运行号升序）"""
    paths = glob.glob(os.path.join(traces_dir, "*.csv"))
    if not paths:
        raise ValueError(f"目录中没有运行记录: {traces_dir}")
    grouped: Dict[str, List[Tuple[int, pd.DataFrame]]] = {}
    for path in paths:
        stem = os.path.splitext(os.path.basename(path))[0]
        mode, _, index = stem.rpartition("_")
        if mode not in MODES or not index.isdigit():
            logger.warning(f"跳过无法识别的文件: {path}")
            continue
        grouped.setdefault(mode, []).append((int(index), pd.read_csv(path)))
    return {m: [frame for _, frame in sorted(items, key=lambda t: t[0])]
            for m, items in sorted(grouped.items())}
