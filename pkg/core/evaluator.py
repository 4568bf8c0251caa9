"""
评估器接口与调用计数

每个评估器都维护一个线程安全的调用计数器；失败的评估同样计数。
"""

from __future__ import annotations

import logging
import threading
from abc import ABC, abstractmethod
from dataclasses import replace
from typing import Optional, Set

from .analytic import (
    AnalyticDeviceParams, BgrParams, evaluate_bgr_analytic, evaluate_tsmcoa_analytic,
)
from .circuit import DesignVector, EvaluationResult, ProblemSpec
from .errors import ConfigError
from .external import ExternalSimConfig, evaluate_external, read_template

logger = logging.getLogger(__name__)


class CallCounter:
    """原子计数器"""

    def __init__(self):
        self._lock = threading.Lock()
        self._count = 0

    def increment(self) -> int:
        with self._lock:
            self._count += 1
            return self._count

    @property
    def value(self) -> int:
        with self._lock:
            return self._count

    def reset(self) -> None:
        with self._lock:
            self._count = 0


class Evaluator(ABC):
    """
    评估器基类（相当于一次 SPICE 仿真）

    子类实现 _evaluate；evaluate 先计数再调用，保证异常或失败的评估也被计入。
    """

    name = "evaluator"

    def __init__(self, counter: Optional[CallCounter] = None):
        self._counter = counter or CallCounter()

    def evaluate(self, x: DesignVector) -> EvaluationResult:
        self._counter.increment()
        return self._evaluate(x)

    @abstractmethod
    def _evaluate(self, x: DesignVector) -> EvaluationResult:
        ...

    def call_count(self) -> int:
        return self._counter.value

    def reset(self) -> None:
        self._counter.reset()

    def metric_keys(self) -> Optional[Set[str]]:
        """评估器能给出的指标键；未知时返回 None"""
        return None


class CountedEvaluator(Evaluator):
    """包装另一个评估器，多个包装可以共享同一个计数器"""

    def __init__(self, inner: Evaluator, counter: Optional[CallCounter] = None):
        super().__init__(counter)
        self.inner = inner
        self.name = inner.name

    def _evaluate(self, x: DesignVector) -> EvaluationResult:
        return self.inner.evaluate(x)

    def metric_keys(self) -> Optional[Set[str]]:
        return self.inner.metric_keys()


def counted(e: Evaluator, counter: Optional[CallCounter] = None) -> CountedEvaluator:
    return CountedEvaluator(e, counter)


class TsmcoaAnalyticEvaluator(Evaluator):
    name = "tsmcoa_analytic"

    def __init__(self, params: Optional[AnalyticDeviceParams] = None):
        super().__init__()
        self.params = params or AnalyticDeviceParams()

    def _evaluate(self, x):
        return evaluate_tsmcoa_analytic(x, self.params)

    def metric_keys(self):
        keys = {"power", "area"}
        for ctx in self.params.contexts:
            keys.update(f"{m}@{ctx}" for m in ("gain", "ugb", "f3db", "pm", "slew_rate", "noise"))
        return keys


class BgrAnalyticEvaluator(Evaluator):
    name = "bgr_analytic"

    def __init__(self, params: Optional[BgrParams] = None):
        super().__init__()
        self.params = params or BgrParams()

    def _evaluate(self, x):
        return evaluate_bgr_analytic(x, self.params)

    def metric_keys(self):
        keys = {"tc", "delta_vref", "power", "psrr", "noise", "area"}
        keys.update(f"vref@{ctx}" for ctx in self.params.temperatures)
        return keys


class SyntheticEvaluator(Evaluator):
    """合成基准：sumsq = Σx²，xsum = x1 + x2，唯一的晶体管恒为饱和"""

    name = "synthetic"

    def _evaluate(self, x):
        values = x.values
        return EvaluationResult(
            metrics={"sumsq": sum(v * v for v in values), "xsum": values[0] + values[1]},
            saturation={"M1": True},
        )

    def metric_keys(self):
        return {"sumsq", "xsum"}


class ExternalEvaluator(Evaluator):
    """外部仿真器评估器，构造时读入并校验网表模板"""

    name = "external"

    def __init__(self, cfg: ExternalSimConfig):
        super().__init__()
        self.cfg = cfg
        self.template = read_template(cfg)

    def _evaluate(self, x):
        return evaluate_external(x, self.cfg, self.template)


def make_evaluator(problem: ProblemSpec, kind: str = "analytic",
                   external: Optional[ExternalSimConfig] = None) -> Evaluator:
    """
    按问题和类型创建新的评估器实例

    Args:
        problem: 问题定义
        kind: 'analytic' | 'external' | 'synthetic'
        external: kind 为 external 时的仿真器配置

    Returns:
        计数从 0 开始的评估器
    """
    if kind == "external":
        if external is None:
            raise ConfigError("外部评估器需要 external 配置", "evaluator.external")
        if not external.variables:
            external = replace(external, variables=problem.variable_names)
        return ExternalEvaluator(external)
    if kind not in ("analytic", "synthetic"):
        raise ConfigError(f"未知的评估器类型 '{kind}'", "evaluator.kind")

    base = problem.name.split("_")[0]
    if base == "synthetic":
        return SyntheticEvaluator()
    if base == "tsmcoa":
        return TsmcoaAnalyticEvaluator()
    if base == "bgr":
        return BgrAnalyticEvaluator()
    raise ConfigError(f"问题 {problem.name} 没有解析模型，请使用外部仿真器", "evaluator.kind")


def check_evaluator_matches(problem: ProblemSpec, evaluator: Evaluator) -> None:
    """确认评估器能给出问题需要的全部指标"""
    keys = evaluator.metric_keys()
    if keys is None:
        return
    missing = [k for k in problem.required_metric_keys() if k not in keys]
    if missing:
        raise ConfigError(f"评估器 {evaluator.name} 无法给出指标: {', '.join(missing)}", "evaluator")
