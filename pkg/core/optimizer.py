"""
遗传算法与代理模型可行性门控

SGA：固定搜索窗口 α = 1，每代两路子代（交叉、交叉后变异）。
MGA：α 随代数线性收缩，并增加父代变异一路子代。
MGA_MLSP / MGA_MLSCP：在调用评估器之前，先用饱和分类器（及约束回归模型）
筛掉预测不可行的候选。
"""

from __future__ import annotations

import json
import logging
import math
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from enum import Enum
from typing import Any, Callable, Dict, List, Mapping, Optional, Protocol, Tuple

import numpy as np
import pandas as pd

from .circuit import (
    Bounds, DesignVector, EvaluationResult, FeasibilityReport, ProblemSpec,
    check_constraints, geometry_report, objective_value,
)
from .errors import ConfigError, DomainError
from .evaluator import CallCounter, Evaluator, counted

logger = logging.getLogger(__name__)


class GateMode(str, Enum):
    SGA = "SGA"
    MGA = "MGA"
    MGA_MLSP = "MGA_MLSP"
    MGA_MLSCP = "MGA_MLSCP"

    @property
    def uses_classifier(self) -> bool:
        return self in (GateMode.MGA_MLSP, GateMode.MGA_MLSCP)

    @property
    def uses_regressor(self) -> bool:
        return self is GateMode.MGA_MLSCP


MODES = tuple(m.value for m in GateMode)

REJECT_GEOMETRY = "geometry"
REJECT_CLASSIFIER = "classifier"
REJECT_REGRESSOR = "regressor"
REJECT_SPICE_CONSTRAINT = "spice_constraint"
REJECT_SPICE_SATURATION = "spice_saturation"
REJECT_SPICE_FAILURE = "spice_failure"
REJECT_CAUSES = (
    REJECT_GEOMETRY, REJECT_CLASSIFIER, REJECT_REGRESSOR,
    REJECT_SPICE_CONSTRAINT, REJECT_SPICE_SATURATION, REJECT_SPICE_FAILURE,
)
SPICE_CAUSES = (REJECT_SPICE_CONSTRAINT, REJECT_SPICE_SATURATION, REJECT_SPICE_FAILURE)

# 子代流编号
STREAM_CROSSOVER = 0
STREAM_CROSSOVER_MUTATION = 1
STREAM_PARENT_MUTATION = 2


class BundleSurrogate(Protocol):
    """门控所需的代理模型接口，SurrogateBundle 和测试用的解析替身都实现它"""

    def classifier_keys(self) -> List[str]: ...

    def regressor_keys(self) -> List[str]: ...

    def predict_saturation(self, X) -> Mapping[str, np.ndarray]: ...

    def predict_metrics(self, X) -> Mapping[str, np.ndarray]: ...


# ============================================
# 配置
# ============================================

@dataclass(frozen=True)
class GaConfig:
    population: int = 20
    gen_max: int = 200
    alpha_start: float = 1.0
    alpha_end: float = 0.05
    retry_budget: int = 50
    mode: GateMode = GateMode.MGA
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        try:
            object.__setattr__(self, "mode", GateMode(self.mode))
        except ValueError:
            raise ConfigError(f"未知模式 '{self.mode}'，可选: {', '.join(MODES)}", "ga.mode") from None
        if self.population < 2:
            raise ConfigError("必须 ≥ 2", "ga.population")
        if self.gen_max < 1:
            raise ConfigError("必须 ≥ 1", "ga.gen_max")
        if not 0 < self.alpha_end <= self.alpha_start <= 1:
            raise ConfigError(f"需满足 0 < alpha_end ≤ alpha_start ≤ 1，当前为 "
                              f"{self.alpha_end}, {self.alpha_start}", "ga.alpha_end")
        if self.retry_budget < 1:
            raise ConfigError("必须 ≥ 1", "ga.retry_budget")
        if self.workers < 1:
            raise ConfigError("必须 ≥ 1", "ga.workers")

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["mode"] = self.mode.value
        return data

    @classmethod
    def from_dict(cls, data: Mapping[str, Any], **overrides) -> "GaConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = [k for k in data if k not in known]
        if unknown:
            raise ConfigError(f"未知字段 {', '.join(unknown)}", "ga")
        return cls(**{**data, **overrides})


# ============================================
# 个体与门控结果
# ============================================

@dataclass(frozen=True)
class Individual:
    """
    种群个体

    penalized 为 True 表示该位置重试预算耗尽，保留的是违反量最小的候选，
    fitness 为惩罚后的适应度。created 为创建序号，用于同分时的排序。
    """
    vector: DesignVector
    fitness: float
    result: Optional[EvaluationResult] = None
    penalized: bool = False
    violation: float = 0.0
    created: int = 0

    def sort_key(self) -> Tuple[bool, float, int]:
        return (self.penalized, self.violation if self.penalized else self.fitness, self.created)


@dataclass(frozen=True)
class GateOutcome:
    vector: DesignVector
    passed: bool
    cause: Optional[str] = None
    violation: float = 0.0
    fitness: Optional[float] = None
    result: Optional[EvaluationResult] = None
    report: Optional[FeasibilityReport] = None


def feasibility_check(x: DesignVector, mode: GateMode, bundle: Optional[BundleSurrogate],
                      evaluator: Evaluator, problem: ProblemSpec) -> GateOutcome:
    """
    候选设计的可行性门控

    顺序：几何约束 → 饱和分类器 (MLSP/MLSCP) → 约束回归模型 (MLSCP) → 评估器。
    前三步被拒时不调用评估器。只有评估结果通过全部约束和饱和检查才算通过。
    """
    mode = GateMode(mode)
    geometry = geometry_report(problem, x)
    if not all(o.passed for o in geometry):
        return GateOutcome(x, False, REJECT_GEOMETRY, sum(o.violation for o in geometry))

    if mode.uses_classifier and bundle is not None:
        X = x.as_array()[None, :]
        predicted = bundle.predict_saturation(X)
        off = sum(1 for key in problem.saturation_keys() if not bool(np.asarray(predicted[key])[0]))
        if off:
            return GateOutcome(x, False, REJECT_CLASSIFIER, float(off))

        if mode.uses_regressor:
            gated = set(bundle.regressor_keys())
            constraints = [c for c in problem.spice_constraints if c.key in gated]
            if constraints:
                values = bundle.predict_metrics(X)
                violation = 0.0
                rejected = False
                for c in constraints:
                    value = float(np.asarray(values[c.key])[0])
                    if not (math.isfinite(value) and c.satisfied_by(value)):
                        rejected = True
                        violation += c.violation(value) if math.isfinite(value) else 1.0
                if rejected:
                    return GateOutcome(x, False, REJECT_REGRESSOR, violation)

    result = evaluator.evaluate(x)
    report = check_constraints(result, problem, x)
    if result.is_failure:
        return GateOutcome(x, False, REJECT_SPICE_FAILURE, report.violation, None, result, report)
    if not report.overall:
        cause = REJECT_SPICE_CONSTRAINT if not report.constraints_passed else REJECT_SPICE_SATURATION
        return GateOutcome(x, False, cause, report.violation, None, result, report)
    try:
        fitness = objective_value(problem, x, result)
    except DomainError as exc:
        logger.debug(f"目标值计算失败: {exc}")
        return GateOutcome(x, False, REJECT_SPICE_FAILURE, report.violation + 1.0, None, result, report)
    return GateOutcome(x, True, None, 0.0, fitness, result.with_feasibility(True), report)


# ============================================
# 遗传算子
# ============================================

def alpha_at(gen: int, cfg: GaConfig) -> float:
    """第 gen 代（从 0 计）的搜索窗口参数，线性由 alpha_start 降到 alpha_end"""
    if cfg.gen_max <= 1:
        return cfg.alpha_start
    return cfg.alpha_start + (cfg.alpha_end - cfg.alpha_start) * gen / (cfg.gen_max - 1)


def crossover(parent_a: DesignVector, parent_b: DesignVector, point: int) -> DesignVector:
    """单点交叉：a[0..point) 接 b[point..D)"""
    dim = parent_a.dim
    if parent_b.dim != dim:
        raise ValueError(f"父代维度不一致: {dim} != {parent_b.dim}")
    if not 1 <= point <= dim - 1:
        raise ValueError(f"交叉点必须在 1..{dim - 1} 之间，当前为 {point}")
    return DesignVector(parent_a.values[:point] + parent_b.values[point:])


def mutate(base: DesignVector, alpha: float, bounds: Bounds, rng: np.random.Generator) -> DesignVector:
    """
    随机选 1..D 个基因，每个在 [x - α·(UB-LB)/2, x + α·(UB-LB)/2] ∩ [LB, UB] 内均匀重采样
    """
    x = base.as_array().copy()
    dim = x.shape[0]
    count = int(rng.integers(1, dim + 1))
    genes = rng.choice(dim, size=count, replace=False)
    lower, upper = bounds.lower_array(), bounds.upper_array()
    half = alpha * (upper - lower) / 2.0
    for i in genes:
        lo = max(lower[i], x[i] - half[i])
        hi = min(upper[i], x[i] + half[i])
        x[i] = rng.uniform(lo, hi) if hi > lo else lo
    return DesignVector(x)


def uniform_sample(bounds: Bounds, rng: np.random.Generator) -> DesignVector:
    return DesignVector(rng.uniform(bounds.lower_array(), bounds.upper_array()))


def slot_rng(seed: int, generation: int, stream: int, slot: int) -> np.random.Generator:
    return np.random.default_rng([seed, generation, stream, slot])


# ============================================
# 运行记录
# ============================================

@dataclass
class TraceRow:
    generation: int
    best_fitness: float
    mean_fitness: float
    cum_calls: int
    rejections: Dict[str, int]
    feasible_count: int

    def as_dict(self) -> Dict[str, Any]:
        row = {
            "generation": self.generation,
            "best_fitness": self.best_fitness,
            "mean_fitness": self.mean_fitness,
            "cum_calls": self.cum_calls,
            "cum_reject_classifier": self.rejections[REJECT_CLASSIFIER],
            "cum_reject_regressor": self.rejections[REJECT_REGRESSOR],
            "cum_reject_spice": sum(self.rejections[c] for c in SPICE_CAUSES),
        }
        for cause in (REJECT_GEOMETRY, *SPICE_CAUSES):
            row[f"cum_reject_{cause}"] = self.rejections[cause]
        row["feasible_count"] = self.feasible_count
        return row


TRACE_COLUMNS = [
    "generation", "best_fitness", "mean_fitness", "cum_calls",
    "cum_reject_classifier", "cum_reject_regressor", "cum_reject_spice",
    "cum_reject_geometry", "cum_reject_spice_constraint", "cum_reject_spice_saturation",
    "cum_reject_spice_failure", "feasible_count",
]


@dataclass
class RunTrace:
    problem: str
    mode: GateMode
    seed: int
    rows: List[TraceRow] = field(default_factory=list)
    best: Optional[Individual] = None
    wall_clock: float = 0.0

    @property
    def best_fitness(self) -> float:
        return self.rows[-1].best_fitness if self.rows else math.inf

    @property
    def total_calls(self) -> int:
        return self.rows[-1].cum_calls if self.rows else 0

    @property
    def feasible(self) -> bool:
        return self.best is not None and not self.best.penalized

    def to_frame(self) -> pd.DataFrame:
        records = []
        for row in self.rows:
            data = row.as_dict()
            records.append({c: data.get(c) for c in TRACE_COLUMNS})
        return pd.DataFrame.from_records(records, columns=TRACE_COLUMNS)

    def to_csv(self, path: str) -> None:
        self.to_frame().to_csv(path, index=False)

    def summary(self) -> Dict[str, Any]:
        best = self.best
        return {
            "problem": self.problem,
            "mode": self.mode.value,
            "seed": self.seed,
            "generations": len(self.rows) - 1,
            "best_fitness": None if math.isinf(self.best_fitness) else self.best_fitness,
            "feasible": self.feasible,
            "total_calls": self.total_calls,
            "rejections": {c: self.rows[-1].rejections[c] for c in REJECT_CAUSES} if self.rows else {},
            "best_vector": list(best.vector.values) if best else None,
            "best_metrics": dict(best.result.metrics) if best and best.result else None,
            "wall_clock": self.wall_clock,
        }

    def to_json(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.summary(), f, ensure_ascii=False, indent=2, sort_keys=True)


# ============================================
# 优化器
# ============================================

class GeneticOptimizer:
    """
    一次 GA 运行

    evaluator 在内部被包装为带独立计数器的 CountedEvaluator，
    因此记录中的调用数只包含本次运行。
    """

    def __init__(self, problem: ProblemSpec, evaluator: Evaluator, cfg: GaConfig,
                 bundle: Optional[BundleSurrogate] = None):
        self.problem = problem
        self.cfg = cfg
        self.mode = cfg.mode
        self.bundle = bundle if self.mode.uses_classifier else None
        self.counter = CallCounter()
        self.evaluator = counted(evaluator, self.counter)
        self.bounds = problem.bounds
        self._lock = threading.Lock()
        self.rejections: Dict[str, int] = {c: 0 for c in REJECT_CAUSES}
        self._check_bundle()

    def _check_bundle(self) -> None:
        if not self.mode.uses_classifier:
            return
        if self.bundle is None:
            raise ConfigError(f"{self.mode.value} 模式需要代理模型包", "bundle")
        missing = [k for k in self.problem.saturation_keys() if k not in self.bundle.classifier_keys()]
        if missing:
            raise ConfigError(f"模型包缺少饱和分类器: {', '.join(missing)}", "bundle")
        if self.mode.uses_regressor:
            have = set(self.bundle.regressor_keys())
            absent = [c.key for c in self.problem.gated_constraints if c.key not in have]
            if absent:
                logger.warning(f"模型包缺少约束回归模型 {', '.join(absent)}，这些约束只在仿真后检查")

    # ---------- 门控与重试 ----------

    def _record(self, cause: str) -> None:
        with self._lock:
            self.rejections[cause] += 1

    def _fill_slot(self, propose: Callable[[np.random.Generator], DesignVector],
                   rng: np.random.Generator, created: int, penalty_base: float) -> Individual:
        """重复提出候选直到通过门控；预算耗尽时保留违反量最小的候选并施加惩罚"""
        least: Optional[GateOutcome] = None
        for _ in range(self.cfg.retry_budget):
            outcome = feasibility_check(propose(rng), self.mode, self.bundle, self.evaluator, self.problem)
            if outcome.passed:
                return Individual(outcome.vector, outcome.fitness, outcome.result, created=created)
            self._record(outcome.cause)
            if least is None or outcome.violation < least.violation:
                least = outcome
        logger.warning(f"个体 #{created} 重试 {self.cfg.retry_budget} 次仍不可行，"
                       f"保留违反量最小的候选 ({least.cause}, {least.violation:.4g})")
        return Individual(least.vector, penalty_base + least.violation, least.result,
                          penalized=True, violation=least.violation, created=created)

    def _map_slots(self, fn: Callable[[int], Any]) -> List[Any]:
        n = self.cfg.population
        if self.cfg.workers > 1:
            with ThreadPoolExecutor(max_workers=self.cfg.workers) as pool:
                return list(pool.map(fn, range(n)))
        return [fn(slot) for slot in range(n)]

    # ---------- 种群 ----------

    def init_population(self) -> List[Individual]:
        """在 [LB, UB] 内均匀采样直到通过门控，得到 N 个个体"""
        bounds = self.bounds

        def fill(slot: int) -> Individual:
            rng = slot_rng(self.cfg.seed, 0, STREAM_CROSSOVER, slot)
            return self._fill_slot(lambda r: uniform_sample(bounds, r), rng, slot, 0.0)

        return self._map_slots(fill)

    def _alpha(self, generation: int) -> float:
        if self.mode is GateMode.SGA:
            return 1.0
        return alpha_at(generation - 1, self.cfg)

    def step(self, population: List[Individual], generation: int) -> List[Individual]:
        """
        生成一代子代并做精英选择

        每个位置依次产生交叉子代和其变异子代，MGA 系列再产生父代变异子代；
        父代与全部子代合并后按 (是否受罚, 适应度或违反量, 创建序号) 排序取前 N 个。
        """
        n = self.cfg.population
        dim = self.problem.dim
        alpha = self._alpha(generation)
        feasible = [ind.fitness for ind in population if not ind.penalized]
        penalty_base = max(feasible) if feasible else 0.0
        base_id = n + (generation - 1) * 3 * n
        parent_stream = self.mode is not GateMode.SGA
        seed = self.cfg.seed

        def cross(r: np.random.Generator) -> DesignVector:
            i, j = r.choice(n, size=2, replace=False)
            a, b = population[i].vector, population[j].vector
            if dim < 2:
                return a
            return crossover(a, b, int(r.integers(1, dim)))

        def fill(slot: int) -> List[Individual]:
            xc = self._fill_slot(cross, slot_rng(seed, generation, STREAM_CROSSOVER, slot),
                                 base_id + slot, penalty_base)
            xcm = self._fill_slot(lambda r: mutate(xc.vector, alpha, self.bounds, r),
                                  slot_rng(seed, generation, STREAM_CROSSOVER_MUTATION, slot),
                                  base_id + n + slot, penalty_base)
            children = [xc, xcm]
            if parent_stream:
                parent = population[slot].vector
                children.append(self._fill_slot(lambda r: mutate(parent, alpha, self.bounds, r),
                                                slot_rng(seed, generation, STREAM_PARENT_MUTATION, slot),
                                                base_id + 2 * n + slot, penalty_base))
            return children

        pool = list(population)
        for children in self._map_slots(fill):
            pool.extend(children)
        pool.sort(key=Individual.sort_key)
        return pool[:n]

    def _trace_row(self, generation: int, population: List[Individual]) -> TraceRow:
        feasible = [ind.fitness for ind in population if not ind.penalized]
        with self._lock:
            rejections = dict(self.rejections)
        return TraceRow(
            generation=generation,
            best_fitness=min(feasible) if feasible else math.inf,
            mean_fitness=float(np.mean(feasible)) if feasible else math.inf,
            cum_calls=self.counter.value,
            rejections=rejections,
            feasible_count=len(feasible),
        )

    def run(self) -> RunTrace:
        start = time.perf_counter()
        trace = RunTrace(self.problem.name, self.mode, self.cfg.seed)
        population = self.init_population()
        population.sort(key=Individual.sort_key)
        trace.rows.append(self._trace_row(0, population))
        for generation in range(1, self.cfg.gen_max + 1):
            population = self.step(population, generation)
            row = self._trace_row(generation, population)
            trace.rows.append(row)
            logger.debug(f"[{self.mode.value}] 第 {generation} 代: 最优 {row.best_fitness:.6g}, "
                         f"累计调用 {row.cum_calls}")
        trace.best = population[0]
        trace.wall_clock = time.perf_counter() - start
        logger.info(f"[{self.mode.value}] {self.problem.name} seed={self.cfg.seed} 完成: "
                    f"最优 {trace.best_fitness:.6g}, 评估调用 {trace.total_calls} 次, "
                    f"耗时 {trace.wall_clock:.1f}s")
        return trace


def run(problem: ProblemSpec, evaluator: Evaluator, cfg: GaConfig,
        bundle: Optional[BundleSurrogate] = None) -> RunTrace:
    """按 cfg.mode 运行一次完整优化"""
    return GeneticOptimizer(problem, evaluator, cfg, bundle).run()


def run_sga(problem: ProblemSpec, evaluator: Evaluator, cfg: GaConfig,
            bundle: Optional[BundleSurrogate] = None) -> RunTrace:
    """标准 GA：忽略 cfg.mode 与模型包"""
    return GeneticOptimizer(problem, evaluator, replace(cfg, mode=GateMode.SGA), None).run()
