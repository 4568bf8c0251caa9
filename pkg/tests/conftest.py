"""
测试公共配置

--runslow 打开标记为 slow 的验收实验（分钟级），默认跳过。
"""

import os
import sys

import numpy as np
import pytest

# 添加项目根目录到路径
ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
sys.path.insert(0, ROOT)

DATA_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), "data")

from core.problems import synthetic_problem, tsmcoa_problem  # noqa: E402


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False,
                     help="运行分钟级的验收实验")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: 分钟级验收实验，需要 --runslow")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="需要 --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


# ============================================
# 公共夹具
# ============================================

@pytest.fixture
def data_dir():
    return DATA_DIR


@pytest.fixture
def synthetic():
    return synthetic_problem()


@pytest.fixture
def tsmcoa():
    return tsmcoa_problem()


class OracleBundle:
    """
    直接调用评估器的“完美”代理模型包

    门控阶段调用的是内部评估器，不经过被计数的评估器，
    因此不会产生评估调用。
    """

    def __init__(self, problem, evaluator, with_regressors=True):
        self.problem = problem
        self.evaluator = evaluator
        self.with_regressors = with_regressors
        self.calls = 0

    def _results(self, X):
        self.calls += 1
        from core.circuit import DesignVector
        return [self.evaluator._evaluate(DesignVector(row)) for row in np.atleast_2d(X)]

    def classifier_keys(self):
        return self.problem.saturation_keys()

    def regressor_keys(self):
        if not self.with_regressors:
            return []
        return [c.key for c in self.problem.gated_constraints]

    def predict_saturation(self, X):
        results = self._results(X)
        return {k: np.array([r.failure is None and r.saturation.get(k, False) for r in results])
                for k in self.classifier_keys()}

    def predict_metrics(self, X):
        results = self._results(X)
        return {k: np.array([r.metrics.get(k, np.nan) if r.failure is None else np.nan
                             for r in results]) for k in self.regressor_keys()}


@pytest.fixture
def oracle_bundle_factory():
    return OracleBundle

