"""
验收实验（分钟级，需要 --runslow）

在解析 TSMCOA 模型上完整走一遍：20000 点数据库 → 训练 → 四种模式各 20 次运行。
"""

import os

import numpy as np
import pytest
from scipy import stats

from core.evaluator import SyntheticEvaluator
from core.harness import config_from_dict, derive_seed, load_traces, run_experiment
from core.optimizer import GaConfig, run
from core.problems import synthetic_problem
from core.surrogate import load_bundle

pytestmark = pytest.mark.slow

WORKERS = max(1, min(8, os.cpu_count() or 1))


@pytest.fixture(scope="module")
def tsmcoa_experiment(tmp_path_factory):
    out = tmp_path_factory.mktemp("tsmcoa")
    cfg = config_from_dict({
        "problem": "tsmcoa",
        "modes": ["SGA", "MGA", "MGA_MLSP", "MGA_MLSCP"],
        "runs": 20,
        "ga": {"population": 20, "gen_max": 200},
        "database_size": 20000,
        "master_seed": 2024,
        "parallel_runs": True,
    }, workers=WORKERS, out=str(out))
    table = run_experiment(cfg)
    return table, load_traces(os.path.join(str(out), "traces")), str(out)


def _final_fitness(frames):
    values = np.array([frame["best_fitness"].iloc[-1] for frame in frames], dtype=float)
    return values[np.isfinite(values)]


def test_synthetic_convergence_rate():
    problem = synthetic_problem()
    hits = 0
    for r in range(20):
        cfg = GaConfig(mode="MGA", population=20, gen_max=200, seed=derive_seed(0, "MGA", r))
        trace = run(problem, SyntheticEvaluator(), cfg)
        hits += trace.feasible and trace.best_fitness <= 0.501
    assert hits >= 19


def test_surrogate_quality(tsmcoa_experiment):
    _, _, out = tsmcoa_experiment
    bundle = load_bundle(os.path.join(out, "bundle"))
    classifiers = [row for row in bundle.metrics if row["role"] == "classifier"]
    regressors = [row for row in bundle.metrics if row["role"] == "regressor"]
    assert len(classifiers) == 16
    assert min(row["accuracy"] for row in classifiers) >= 0.97
    assert min(row["r2"] for row in regressors) >= 0.90


def test_call_reduction(tsmcoa_experiment):
    table, _, _ = tsmcoa_experiment
    mga, mlsp, mlscp = (table.rows[m] for m in ("MGA", "MGA_MLSP", "MGA_MLSCP"))
    assert mlscp.median_calls < mlsp.median_calls < mga.median_calls
    assert (mga.median_calls - mlscp.median_calls) / mga.median_calls >= 0.30
    assert abs(mlscp.mean - mga.mean) / mga.mean <= 0.02


def test_precision_ordering(tsmcoa_experiment):
    _, traces, _ = tsmcoa_experiment
    sga = _final_fitness(traces["SGA"])
    mlscp = _final_fitness(traces["MGA_MLSCP"])
    # 以到各自中位数的绝对偏差比较离散程度
    spread_sga = np.abs(sga - np.median(sga))
    spread_mlscp = np.abs(mlscp - np.median(mlscp))
    result = stats.mannwhitneyu(spread_mlscp, spread_sga, alternative="less")
    assert result.pvalue < 0.05
    for mode in ("SGA", "MGA", "MGA_MLSP", "MGA_MLSCP"):
        print(f"{mode}: SD = {np.std(_final_fitness(traces[mode]), ddof=1):.4g}")
