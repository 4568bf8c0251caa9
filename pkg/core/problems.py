"""
内置优化问题定义与问题文件读写

包含带隙基准 (BGR)、折叠共源共栅运放 (FCOA)、两级米勒补偿运放 (TSMCOA)
三个电路问题，以及用于验证优化器的二维合成基准。
"""

from __future__ import annotations

import json
import logging
from dataclasses import replace
from typing import Any, Dict, List, Optional, Tuple

from .circuit import (
    GE, LE, ConstraintSpec, DeviceGroup, Objective, ProblemSpec, Variable,
    WeightedObjective,
)
from .errors import ConfigError

logger = logging.getLogger(__name__)

BGR_SATURATION_CONTEXTS = ("T-40", "T125")
BGR_TEMPERATURES = {"T-40": -40.0, "T27": 27.0, "T125": 125.0}
TSMCOA_CONTEXTS = ("icmr_min", "icmr_max")

TSMCOA_LENGTH = 60e-9
FCOA_LENGTH = 180e-9


def bgr_problem() -> ProblemSpec:
    """带隙基准：最小化 |TC|，x = (W12, W34, W5, R1, R2, L12, L34, L5)"""
    w_range = (180e-9, 50e-6)
    l_range = (180e-9, 1e-6)
    variables = (
        Variable("W12", *w_range, unit="m"),
        Variable("W34", *w_range, unit="m"),
        Variable("W5", *w_range, unit="m"),
        Variable("R1", 500.0, 5e3, unit="ohm"),
        Variable("R2", 1e3, 150e3, unit="ohm"),
        Variable("L12", *l_range, unit="m"),
        Variable("L34", *l_range, unit="m"),
        Variable("L5", *l_range, unit="m"),
    )
    groups = (
        DeviceGroup("W12", ("M1", "M2"), "W12", "L12"),
        DeviceGroup("W34", ("M3", "M4"), "W34", "L34"),
        DeviceGroup("W5", ("M5",), "W5", "L5"),
    )
    constraints = (
        ConstraintSpec("psrr", GE, 15.0, unit="dB", surrogate="mlp"),
        ConstraintSpec("delta_vref", LE, 5e-3, unit="V", surrogate="mlp"),
        ConstraintSpec("power", LE, 600e-6, unit="W"),
        ConstraintSpec("area", LE, 500e-12, unit="m2"),
        ConstraintSpec("aspect_ratio", GE, 1.0),
        ConstraintSpec("aspect_ratio", LE, 100.0),
        ConstraintSpec("length", GE, 180e-9, unit="m"),
        ConstraintSpec("length", LE, 5e-6, unit="m"),
        ConstraintSpec("noise", LE, 2e-6, unit="V/rtHz", surrogate="rf"),
    )
    return ProblemSpec(
        name="bgr",
        variables=variables,
        transistors=("M1", "M2", "M3", "M4", "M5"),
        objective=Objective("tc", absolute=True),
        constraints=constraints,
        saturation_contexts=BGR_SATURATION_CONTEXTS,
        device_groups=groups,
        description="带隙基准，-40 °C 到 125 °C 温度系数最小化",
    )


def fcoa_problem() -> ProblemSpec:
    """折叠共源共栅运放：最小化面积，x = [W12, W34bp, Wbn5, W67, W89, W1011, Ibias]"""
    w_range = (200e-9, 60e-6)
    variables = (
        Variable("W12", *w_range, unit="m"),
        Variable("W34bp", *w_range, unit="m"),
        Variable("Wbn5", *w_range, unit="m"),
        Variable("W67", *w_range, unit="m"),
        Variable("W89", *w_range, unit="m"),
        Variable("W1011", *w_range, unit="m"),
        Variable("Ibias", 1e-6, 1e-3, unit="A"),
    )
    groups = (
        DeviceGroup("W12", ("M1", "M2"), "W12", FCOA_LENGTH),
        DeviceGroup("W34bp", ("M3", "M4", "Mbp"), "W34bp", FCOA_LENGTH),
        DeviceGroup("Wbn5", ("Mbn", "M5"), "Wbn5", FCOA_LENGTH),
        DeviceGroup("W67", ("M6", "M7"), "W67", FCOA_LENGTH),
        DeviceGroup("W89", ("M8", "M9"), "W89", FCOA_LENGTH),
        DeviceGroup("W1011", ("M10", "M11"), "W1011", FCOA_LENGTH),
    )
    constraints = (
        ConstraintSpec("gain", GE, 40.0, unit="dB", surrogate="mlp"),
        ConstraintSpec("power", LE, 5e-3, unit="W", surrogate="rf"),
        ConstraintSpec("slew_rate", GE, 20e6, unit="V/s", surrogate="rf"),
        ConstraintSpec("ugb", GE, 40e6, unit="Hz", surrogate="rf"),
        ConstraintSpec("pm", GE, 60.0, unit="deg", surrogate="rf"),
        ConstraintSpec("aspect_ratio", GE, 4.0 / 3.0),
        ConstraintSpec("aspect_ratio", LE, 300.0),
    )
    return ProblemSpec(
        name="fcoa",
        variables=variables,
        transistors=("M1", "M2", "M3", "M4", "Mbp", "Mbn", "M5",
                     "M6", "M7", "M8", "M9", "M10", "M11"),
        objective=Objective("area"),
        constraints=constraints,
        saturation_contexts=(None,),
        device_groups=groups,
        description="折叠共源共栅运放，180 nm，最小化栅面积",
    )


def tsmcoa_problem() -> ProblemSpec:
    """两级米勒补偿运放：最小化面积，x = [W12, W34, W58, W6, W7, Ibias]"""
    w_range = (100e-9, 4e-6)
    variables = (
        Variable("W12", *w_range, unit="m"),
        Variable("W34", *w_range, unit="m"),
        Variable("W58", *w_range, unit="m"),
        Variable("W6", *w_range, unit="m"),
        Variable("W7", *w_range, unit="m"),
        Variable("Ibias", 1e-6, 100e-6, unit="A"),
    )
    groups = (
        DeviceGroup("W12", ("M1", "M2"), "W12", TSMCOA_LENGTH),
        DeviceGroup("W34", ("M3", "M4"), "W34", TSMCOA_LENGTH),
        DeviceGroup("W58", ("M5", "M8"), "W58", TSMCOA_LENGTH),
        DeviceGroup("W6", ("M6",), "W6", TSMCOA_LENGTH),
        DeviceGroup("W7", ("M7",), "W7", TSMCOA_LENGTH),
    )
    constraints: List[ConstraintSpec] = []
    for ctx in TSMCOA_CONTEXTS:
        constraints.extend([
            ConstraintSpec("gain", GE, 20.0, ctx, unit="dB", surrogate="mlp"),
            ConstraintSpec("f3db", GE, 10e6, ctx, unit="Hz", surrogate="mlp"),
            ConstraintSpec("ugb", GE, 100e6, ctx, unit="Hz", surrogate="mlp"),
            ConstraintSpec("pm", GE, 60.0, ctx, unit="deg", surrogate="rf"),
            ConstraintSpec("slew_rate", GE, 100e6, ctx, unit="V/s"),
            ConstraintSpec("noise", LE, 60e-9, ctx, unit="V/rtHz", surrogate="rf"),
        ])
    constraints.extend([
        ConstraintSpec("power", LE, 400e-6, unit="W"),
        ConstraintSpec("area", LE, 1e-12, unit="m2"),
        ConstraintSpec("aspect_ratio", GE, 2.0),
        ConstraintSpec("aspect_ratio", LE, 200.0),
    ])
    return ProblemSpec(
        name="tsmcoa",
        variables=variables,
        transistors=("M1", "M2", "M3", "M4", "M5", "M6", "M7", "M8"),
        objective=Objective("area"),
        constraints=tuple(constraints),
        saturation_contexts=TSMCOA_CONTEXTS,
        device_groups=groups,
        description="两级米勒补偿运放，65 nm，ICMR 0.6 V 到 1.0 V，最小化栅面积",
    )


def synthetic_problem() -> ProblemSpec:
    """合成基准：min x1² + x2²，s.t. x1 + x2 ≥ 1，最优值 0.5"""
    return ProblemSpec(
        name="synthetic",
        variables=(Variable("x1", 0.0, 1.0), Variable("x2", 0.0, 1.0)),
        transistors=("M1",),
        objective=Objective("sumsq"),
        constraints=(ConstraintSpec("xsum", GE, 1.0, surrogate="mlp"),),
        description="二维约束二次函数基准",
    )


def builtin_problems() -> List[ProblemSpec]:
    return [bgr_problem(), fcoa_problem(), tsmcoa_problem()]


def get_problem(name: str) -> ProblemSpec:
    """按名称获取内置问题（含 synthetic）"""
    registry = {p.name: p for p in builtin_problems()}
    registry["synthetic"] = synthetic_problem()
    key = name.strip().lower()
    if key not in registry:
        raise ConfigError(f"未知问题 '{name}'，可选: {', '.join(sorted(registry))}", "problem")
    return registry[key]


def weighted_problem(base: ProblemSpec, alpha: float, beta: float,
                     power_limit: Optional[float] = None) -> ProblemSpec:
    """
    把面积目标换成 alpha·面积 + beta·功耗 的多目标版本

    Args:
        base: 原问题，需要有 power 指标
        alpha: 面积权重
        beta: 功耗权重
        power_limit: 可选，替换原功耗约束的阈值

    Returns:
        新的 ProblemSpec，名称带 _weighted 后缀
    """
    constraints = base.constraints
    if power_limit is not None:
        constraints = tuple(
            replace(c, threshold=power_limit) if c.metric == "power" and c.comparator == LE else c
            for c in constraints
        )
    return replace(base, name=f"{base.name}_weighted",
                   objective=WeightedObjective(alpha, beta), constraints=constraints)


# ============================================
# 问题文件 (JSON)
# ============================================

def problem_to_dict(p: ProblemSpec) -> Dict[str, Any]:
    if isinstance(p.objective, WeightedObjective):
        objective = {"kind": "weighted", "alpha": p.objective.alpha, "beta": p.objective.beta,
                     "power_metric": p.objective.power_metric,
                     "power_context": p.objective.power_context}
    else:
        objective = {"kind": "metric", "metric": p.objective.metric,
                     "context": p.objective.context, "absolute": p.objective.absolute}
    return {
        "name": p.name,
        "description": p.description,
        "variables": [{"name": v.name, "lower": v.lower, "upper": v.upper, "unit": v.unit}
                      for v in p.variables],
        "transistors": list(p.transistors),
        "device_groups": [{"name": g.name, "transistors": list(g.transistors),
                           "width": g.width, "length": g.length} for g in p.device_groups],
        "objective": objective,
        "constraints": [{"metric": c.metric, "comparator": c.comparator,
                         "threshold": c.threshold, "context": c.context,
                         "unit": c.unit, "surrogate": c.surrogate} for c in p.constraints],
        "saturation_contexts": list(p.saturation_contexts),
    }


def _objective_from_dict(data: Dict[str, Any]):
    kind = data.get("kind", "metric")
    if kind == "weighted":
        return WeightedObjective(float(data["alpha"]), float(data["beta"]),
                                 data.get("power_metric", "power"), data.get("power_context"))
    if kind == "metric":
        return Objective(data["metric"], data.get("context"), bool(data.get("absolute", False)))
    raise ConfigError(f"未知的目标类型 '{kind}'", "objective.kind")


def problem_from_dict(data: Dict[str, Any]) -> ProblemSpec:
    """从字典构造问题定义，字段缺失或非法时抛出 ConfigError"""
    try:
        return ProblemSpec(
            name=data["name"],
            description=data.get("description", ""),
            variables=tuple(Variable(v["name"], float(v["lower"]), float(v["upper"]),
                                     v.get("unit", "")) for v in data["variables"]),
            transistors=tuple(data["transistors"]),
            device_groups=tuple(DeviceGroup(g["name"], tuple(g["transistors"]), g["width"],
                                            g["length"]) for g in data.get("device_groups", [])),
            objective=_objective_from_dict(data["objective"]),
            constraints=tuple(ConstraintSpec(c["metric"], c["comparator"], c["threshold"],
                                             c.get("context"), c.get("unit", ""),
                                             c.get("surrogate"))
                              for c in data.get("constraints", [])),
            saturation_contexts=tuple(data.get("saturation_contexts", [None])),
        )
    except ConfigError:
        raise
    except KeyError as exc:
        raise ConfigError(f"缺少字段 {exc}", "problem") from exc
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc), "problem") from exc


def load_problem(path: str) -> ProblemSpec:
    with open(path, "r", encoding="utf-8") as f:
        data = json.load(f)
    logger.info(f"已加载问题文件: {path}")
    return problem_from_dict(data)


def save_problem(p: ProblemSpec, path: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(problem_to_dict(p), f, ensure_ascii=False, indent=2)


def resolve_problem(ref: str) -> Tuple[ProblemSpec, str]:
    """problem 字段既可以是内置问题名，也可以是问题文件路径"""
    if ref.endswith(".json"):
        return load_problem(ref), ref
    return get_problem(ref), ref
