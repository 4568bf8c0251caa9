"""
电路尺寸优化的领域类型与目标函数

设计向量、变量边界、约束与问题定义，以及温度系数、面积、
加权目标和约束检查等公式。所有内部计算使用 SI 单位。
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import DomainError

GE = ">="
LE = "<="
COMPARATORS = (GE, LE)

# 只依赖几何尺寸、无需仿真即可检查的指标
GEOMETRY_METRICS = ("area", "aspect_ratio", "length")

SURROGATE_FAMILIES = ("mlp", "rf")

# BGR 温度系数公式中的温度跨度 (-40 °C 到 125 °C)
TC_TEMPERATURE_SPAN = 165.0


def metric_key(name: str, context: Optional[str] = None) -> str:
    """指标/饱和标志的字符串键：name 或 name@context"""
    return f"{name}@{context}" if context else name


def split_key(key: str) -> Tuple[str, Optional[str]]:
    name, _, context = key.partition("@")
    return name, (context or None)


# ============================================
# 基础类型
# ============================================

@dataclass(frozen=True)
class Bounds:
    """各维度的上下界 [LB, UB]"""
    lower: Tuple[float, ...]
    upper: Tuple[float, ...]

    def __post_init__(self):
        lower = tuple(float(v) for v in self.lower)
        upper = tuple(float(v) for v in self.upper)
        if len(lower) != len(upper):
            raise ValueError(f"上下界长度不一致: {len(lower)} != {len(upper)}")
        if not lower:
            raise ValueError("边界至少需要一个维度")
        for i, (lo, hi) in enumerate(zip(lower, upper)):
            if not (math.isfinite(lo) and math.isfinite(hi)):
                raise ValueError(f"第 {i} 维边界不是有限值")
            if not lo < hi:
                raise ValueError(f"第 {i} 维下界 {lo} 必须小于上界 {hi}")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @property
    def dim(self) -> int:
        return len(self.lower)

    def lower_array(self) -> np.ndarray:
        return np.asarray(self.lower, dtype=float)

    def upper_array(self) -> np.ndarray:
        return np.asarray(self.upper, dtype=float)

    def width(self) -> np.ndarray:
        return self.upper_array() - self.lower_array()

    def contains(self, values: Sequence[float]) -> bool:
        arr = np.asarray(values, dtype=float)
        return bool(np.all(arr >= self.lower_array()) and np.all(arr <= self.upper_array()))


@dataclass(frozen=True)
class DesignVector:
    """设计向量 x，按问题定义的变量顺序排列"""
    values: Tuple[float, ...]

    def __post_init__(self):
        values = tuple(float(v) for v in self.values)
        if not values:
            raise ValueError("设计向量不能为空")
        if not all(math.isfinite(v) for v in values):
            raise ValueError(f"设计向量含非有限值: {values}")
        object.__setattr__(self, "values", values)

    @property
    def dim(self) -> int:
        return len(self.values)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)

    def __len__(self):
        return len(self.values)

    def __getitem__(self, i):
        return self.values[i]


@dataclass(frozen=True)
class Variable:
    name: str
    lower: float
    upper: float
    unit: str = ""


@dataclass(frozen=True)
class DeviceGroup:
    """
    共用同一宽度变量的匹配晶体管组

    length 可以是变量名，也可以是固定沟道长度（米）。
    """
    name: str
    transistors: Tuple[str, ...]
    width: str
    length: Union[str, float]

    def __post_init__(self):
        object.__setattr__(self, "transistors", tuple(self.transistors))
        if not self.transistors:
            raise ValueError(f"器件组 {self.name} 至少包含一个晶体管")
        if not isinstance(self.length, str):
            object.__setattr__(self, "length", float(self.length))

    @property
    def multiplicity(self) -> int:
        return len(self.transistors)


@dataclass(frozen=True)
class ConstraintSpec:
    """
    单个约束：metric comparator threshold，比较包含等号

    surrogate 不为空时，该约束在 MGA_MLSCP 模式下由对应回归模型
    ('mlp' 或 'rf') 预先筛选。
    """
    metric: str
    comparator: str
    threshold: float
    context: Optional[str] = None
    unit: str = ""
    surrogate: Optional[str] = None

    def __post_init__(self):
        if not self.metric:
            raise ValueError("约束的指标名不能为空")
        if self.comparator not in COMPARATORS:
            raise ValueError(f"不支持的比较符: {self.comparator}")
        threshold = float(self.threshold)
        if not math.isfinite(threshold):
            raise ValueError(f"约束 {self.metric} 的阈值必须是有限值")
        object.__setattr__(self, "threshold", threshold)
        if self.surrogate is not None and self.surrogate not in SURROGATE_FAMILIES:
            raise ValueError(f"未知的代理模型类型: {self.surrogate}")
        if self.surrogate is not None and self.is_geometry:
            raise ValueError(f"几何约束 {self.metric} 不需要代理模型")

    @property
    def key(self) -> str:
        return metric_key(self.metric, self.context)

    @property
    def is_geometry(self) -> bool:
        return self.metric in GEOMETRY_METRICS

    @property
    def gated(self) -> bool:
        return self.surrogate is not None

    def satisfied_by(self, value: float) -> bool:
        if self.comparator == GE:
            return value >= self.threshold
        return value <= self.threshold

    def violation(self, value: float) -> float:
        """归一化违反量，满足时为 0"""
        if self.satisfied_by(value):
            return 0.0
        return abs(value - self.threshold) / max(abs(self.threshold), 1e-30)


@dataclass(frozen=True)
class Objective:
    """单指标最小化目标；metric 为 'area' 时由几何尺寸直接计算"""
    metric: str
    context: Optional[str] = None
    absolute: bool = False

    @property
    def key(self) -> str:
        return metric_key(self.metric, self.context)


@dataclass(frozen=True)
class WeightedObjective:
    """面积与功耗的加权和 alpha·A + beta·P"""
    alpha: float
    beta: float
    power_metric: str = "power"
    power_context: Optional[str] = None

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("权重 alpha、beta 必须非负")
        if self.alpha + self.beta <= 0:
            raise ValueError("alpha + beta 必须大于 0")

    @property
    def power_key(self) -> str:
        return metric_key(self.power_metric, self.power_context)


@dataclass(frozen=True)
class ProblemSpec:
    """一个尺寸优化问题：变量、晶体管、目标、约束和饱和检查工况"""
    name: str
    variables: Tuple[Variable, ...]
    transistors: Tuple[str, ...]
    objective: Union[Objective, WeightedObjective]
    constraints: Tuple[ConstraintSpec, ...] = ()
    saturation_contexts: Tuple[Optional[str], ...] = (None,)
    device_groups: Tuple[DeviceGroup, ...] = ()
    description: str = ""

    def __post_init__(self):
        for attr in ("variables", "transistors", "constraints", "saturation_contexts", "device_groups"):
            object.__setattr__(self, attr, tuple(getattr(self, attr)))
        if not self.variables:
            raise ValueError(f"问题 {self.name} 没有设计变量")
        if not self.transistors:
            raise ValueError(f"问题 {self.name} 至少需要一个晶体管")
        if not self.saturation_contexts:
            raise ValueError(f"问题 {self.name} 至少需要一个饱和检查工况")
        names = [v.name for v in self.variables]
        if len(set(names)) != len(names):
            raise ValueError(f"问题 {self.name} 的变量名重复")
        for group in self.device_groups:
            if group.width not in names:
                raise ValueError(f"器件组 {group.name} 引用了未知的宽度变量 {group.width}")
            if isinstance(group.length, str) and group.length not in names:
                raise ValueError(f"器件组 {group.name} 引用了未知的长度变量 {group.length}")
            for t in group.transistors:
                if t not in self.transistors:
                    raise ValueError(f"器件组 {group.name} 引用了未知晶体管 {t}")
        for c in self.constraints:
            if c.metric in ("aspect_ratio", "length") and not self.device_groups:
                raise ValueError(f"约束 {c.metric} 需要器件组定义")
        Bounds([v.lower for v in self.variables], [v.upper for v in self.variables])

    @property
    def dim(self) -> int:
        return len(self.variables)

    @property
    def transistor_count(self) -> int:
        return len(self.transistors)

    @property
    def bounds(self) -> Bounds:
        return Bounds([v.lower for v in self.variables], [v.upper for v in self.variables])

    @property
    def variable_names(self) -> Tuple[str, ...]:
        return tuple(v.name for v in self.variables)

    def variable_index(self, name: str) -> int:
        return self.variable_names.index(name)

    def saturation_keys(self) -> List[str]:
        return [metric_key(t, ctx) for ctx in self.saturation_contexts for t in self.transistors]

    @property
    def geometry_constraints(self) -> Tuple[ConstraintSpec, ...]:
        return tuple(c for c in self.constraints if c.is_geometry)

    @property
    def spice_constraints(self) -> Tuple[ConstraintSpec, ...]:
        return tuple(c for c in self.constraints if not c.is_geometry)

    @property
    def gated_constraints(self) -> Tuple[ConstraintSpec, ...]:
        return tuple(c for c in self.constraints if c.gated)

    def required_metric_keys(self) -> List[str]:
        """评估器需要给出的指标键（约束 + 目标）"""
        keys = [c.key for c in self.spice_constraints]
        if isinstance(self.objective, WeightedObjective):
            keys.append(self.objective.power_key)
        elif self.objective.metric not in GEOMETRY_METRICS:
            keys.append(self.objective.key)
        return list(dict.fromkeys(keys))


@dataclass(frozen=True)
class EvaluationResult:
    """
    一次评估（仿真）的结果

    failure 非空表示评估失败（不可实现、超时、解析错误等），
    此时 metrics 可以为空，但绝不会用 0 填充。
    """
    metrics: Mapping[str, float] = field(default_factory=dict)
    saturation: Mapping[str, bool] = field(default_factory=dict)
    failure: Optional[str] = None
    message: str = ""
    feasible_spice: Optional[bool] = None

    def __post_init__(self):
        metrics = {k: float(v) for k, v in dict(self.metrics).items()}
        if self.failure is None:
            bad = [k for k, v in metrics.items() if not math.isfinite(v)]
            if bad:
                raise ValueError(f"指标值非有限且未标记失败: {bad}")
        object.__setattr__(self, "metrics", metrics)
        object.__setattr__(self, "saturation", {k: bool(v) for k, v in dict(self.saturation).items()})

    @classmethod
    def failed(cls, kind: str, message: str = "") -> "EvaluationResult":
        return cls(metrics={}, saturation={}, failure=kind, message=message, feasible_spice=False)

    @property
    def is_failure(self) -> bool:
        return self.failure is not None

    def with_feasibility(self, flag: bool) -> "EvaluationResult":
        return replace(self, feasible_spice=bool(flag))


@dataclass(frozen=True)
class ConstraintOutcome:
    constraint: ConstraintSpec
    value: Optional[float]
    passed: bool
    missing: bool = False
    violation: float = 0.0


@dataclass(frozen=True)
class FeasibilityReport:
    """约束逐项检查结果 + 饱和检查结果 + 总判定"""
    constraints: Tuple[ConstraintOutcome, ...]
    saturation: Mapping[str, bool]
    saturation_passed: bool
    overall: bool
    violation: float
    failure: Optional[str] = None

    @property
    def failed_constraints(self) -> List[ConstraintOutcome]:
        return [c for c in self.constraints if not c.passed]

    @property
    def constraints_passed(self) -> bool:
        return all(c.passed for c in self.constraints)


# ============================================
# 公式
# ============================================

def compute_tc(vref_m40: float, vref_125: float, vref_27: float) -> float:
    """
    带隙基准的温度系数 (ppm/°C)

    TC = (V(125) - V(-40)) * 1e6 / (V(27) * 165)，保留符号。
    """
    if not vref_27 > 0:
        raise DomainError(f"V_REF(27 °C) 必须为正，当前为 {vref_27}")
    return (vref_125 - vref_m40) * 1e6 / (vref_27 * TC_TEMPERATURE_SPAN)


def compute_area(widths: Sequence[float], lengths: Sequence[float],
                 multiplicities: Optional[Sequence[int]] = None) -> float:
    """
    栅面积 Σ m_i·W_i·L_i (m²)

    Args:
        widths: 各器件（组）宽度
        lengths: 对应沟道长度
        multiplicities: 每组的物理晶体管个数，缺省均为 1

    Returns:
        总面积（平方米）
    """
    if len(widths) != len(lengths):
        raise ValueError(f"宽度与长度个数不一致: {len(widths)} != {len(lengths)}")
    if multiplicities is None:
        multiplicities = [1] * len(widths)
    elif len(multiplicities) != len(widths):
        raise ValueError("倍数列表长度与宽度不一致")
    total = 0.0
    for w, l, m in zip(widths, lengths, multiplicities):
        if w <= 0 or l <= 0:
            raise ValueError(f"宽度和长度必须为正: W={w}, L={l}")
        if m < 1:
            raise ValueError(f"晶体管倍数必须 ≥ 1: {m}")
        total += m * w * l
    return total


def weighted_fitness(area: float, power: float, w: WeightedObjective) -> float:
    return w.alpha * area + w.beta * power


def device_dimensions(problem: ProblemSpec, x: DesignVector) -> List[Tuple[DeviceGroup, float, float]]:
    """返回每个器件组的 (组, W, L)"""
    values = dict(zip(problem.variable_names, x.values))
    dims = []
    for group in problem.device_groups:
        length = values[group.length] if isinstance(group.length, str) else group.length
        dims.append((group, values[group.width], length))
    return dims


def problem_area(problem: ProblemSpec, x: DesignVector) -> float:
    dims = device_dimensions(problem, x)
    return compute_area([w for _, w, _ in dims], [l for _, _, l in dims],
                        [g.multiplicity for g, _, _ in dims])


def geometry_value(problem: ProblemSpec, x: DesignVector, constraint: ConstraintSpec) -> float:
    """
    几何约束的检查值：面积取总和；宽长比与沟道长度对 ≥ 取各组最小值、对 ≤ 取最大值
    """
    if constraint.metric == "area":
        return problem_area(problem, x)
    dims = device_dimensions(problem, x)
    if constraint.metric == "aspect_ratio":
        values = [w / l for _, w, l in dims]
    else:
        values = [l for _, _, l in dims]
    return min(values) if constraint.comparator == GE else max(values)


def geometry_report(problem: ProblemSpec, x: DesignVector) -> Tuple[ConstraintOutcome, ...]:
    outcomes = []
    for c in problem.geometry_constraints:
        value = geometry_value(problem, x, c)
        outcomes.append(ConstraintOutcome(c, value, c.satisfied_by(value), False, c.violation(value)))
    return tuple(outcomes)


def check_constraints(r: EvaluationResult, p: ProblemSpec,
                      x: Optional[DesignVector] = None) -> FeasibilityReport:
    """
    检查一次评估结果是否满足问题的全部约束与饱和条件

    缺失的指标记为失败（违反量 1.0），不抛异常。给出 x 时同时检查几何约束。
    """
    outcomes: List[ConstraintOutcome] = []
    if x is not None:
        outcomes.extend(geometry_report(p, x))
    for c in p.spice_constraints:
        value = r.metrics.get(c.key)
        if value is None or not math.isfinite(value):
            outcomes.append(ConstraintOutcome(c, None, False, True, 1.0))
            continue
        outcomes.append(ConstraintOutcome(c, value, c.satisfied_by(value), False, c.violation(value)))

    saturation: Dict[str, bool] = {}
    sat_violation = 0.0
    for key in p.saturation_keys():
        flag = bool(r.saturation.get(key, False))
        saturation[key] = flag
        if not flag:
            sat_violation += 1.0
    saturation_passed = sat_violation == 0.0
    violation = sum(o.violation for o in outcomes) + sat_violation
    overall = (r.failure is None and saturation_passed and all(o.passed for o in outcomes))
    return FeasibilityReport(tuple(outcomes), saturation, saturation_passed, overall,
                             violation, r.failure)


def objective_value(problem: ProblemSpec, x: DesignVector, r: EvaluationResult) -> float:
    """计算目标函数值（越小越好）"""
    objective = problem.objective
    if isinstance(objective, WeightedObjective):
        power = r.metrics.get(objective.power_key)
        if power is None:
            raise DomainError(f"评估结果缺少功耗指标 {objective.power_key}")
        return weighted_fitness(problem_area(problem, x), power, objective)
    if objective.metric == "area":
        value = problem_area(problem, x)
    else:
        if objective.key not in r.metrics:
            raise DomainError(f"评估结果缺少目标指标 {objective.key}")
        value = r.metrics[objective.key]
    return abs(value) if objective.absolute else value

