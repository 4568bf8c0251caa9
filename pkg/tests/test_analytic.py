"""
解析模型测试

TSMCOA 对照 tests/data/tsmcoa_golden.json 中逐项手算的参考设计点，
其余用例检查公式的缩放关系。
"""

import json
import math
import os
from dataclasses import replace

import numpy as np
import pytest

from core.analytic import (
    AnalyticDeviceParams, BgrParams, evaluate_bgr_analytic, evaluate_tsmcoa_analytic,
)
from core.circuit import DesignVector, check_constraints
from core.evaluator import BgrAnalyticEvaluator
from core.optimizer import GaConfig, run
from core.problems import bgr_problem

TSMCOA_ORDER = ("W12", "W34", "W58", "W6", "W7", "Ibias")
CONTEXTS = ("icmr_min", "icmr_max")


@pytest.fixture(scope="module")
def golden():
    path = os.path.join(os.path.dirname(__file__), "data", "tsmcoa_golden.json")
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


@pytest.fixture(scope="module")
def golden_x(golden):
    return DesignVector([golden["inputs"][k] for k in TSMCOA_ORDER])


def _scaled_widths(x, factor):
    values = list(x.values)
    return DesignVector([v * factor for v in values[:5]] + values[5:])


# ============================================
# TSMCOA
# ============================================

class TestTsmcoaGolden:

    def test_metrics(self, golden, golden_x):
        r = evaluate_tsmcoa_analytic(golden_x)
        assert r.failure is None
        for ctx in CONTEXTS:
            for name, expected in golden["metrics"].items():
                assert r.metrics[f"{name}@{ctx}"] == pytest.approx(expected, rel=1e-4), name
        for name, expected in golden["global_metrics"].items():
            assert r.metrics[name] == pytest.approx(expected, rel=1e-9), name

    def test_saturation(self, golden, golden_x):
        r = evaluate_tsmcoa_analytic(golden_x)
        assert len(r.saturation) == 16
        assert all(r.saturation.values()) is golden["all_saturated"]

    def test_feasibility_report(self, golden, golden_x, tsmcoa):
        report = check_constraints(evaluate_tsmcoa_analytic(golden_x), tsmcoa, golden_x)
        assert report.overall is golden["feasible"]
        assert [o.constraint.key for o in report.failed_constraints] == golden["failed_constraints"]
        assert report.violation == pytest.approx(golden["violation"], rel=1e-4)

    def test_pure_function(self, golden_x):
        assert evaluate_tsmcoa_analytic(golden_x) == evaluate_tsmcoa_analytic(golden_x)


class TestTsmcoaScaling:

    def test_halving_lambda_adds_12db(self, golden_x):
        base = evaluate_tsmcoa_analytic(golden_x)
        params = AnalyticDeviceParams(lambda_n=0.5, lambda_p=0.5)
        half = evaluate_tsmcoa_analytic(golden_x, params)
        delta = half.metrics["gain@icmr_min"] - base.metrics["gain@icmr_min"]
        assert delta == pytest.approx(20 * math.log10(4), abs=1e-9)
        assert delta == pytest.approx(12.04, abs=5e-3)

    def test_doubling_widths_scales_gm_by_sqrt2(self, golden_x):
        base = evaluate_tsmcoa_analytic(golden_x)
        wide = evaluate_tsmcoa_analytic(_scaled_widths(golden_x, 2.0))
        # UGB ∝ gm1
        assert wide.metrics["ugb@icmr_min"] / base.metrics["ugb@icmr_min"] == pytest.approx(math.sqrt(2))
        # 电流不变，功耗与压摆率不变
        assert wide.metrics["power"] == pytest.approx(base.metrics["power"])
        assert wide.metrics["slew_rate@icmr_max"] == pytest.approx(base.metrics["slew_rate@icmr_max"])
        assert wide.metrics["area"] == pytest.approx(2 * base.metrics["area"])

    def test_slew_rate_tracks_bias(self, golden_x):
        values = list(golden_x.values)
        values[5] *= 2
        r = evaluate_tsmcoa_analytic(DesignVector(values))
        assert r.metrics["slew_rate@icmr_min"] == pytest.approx(2 * 20e-6 / 60e-15)

    def test_unrealizable_tail_node(self):
        # W12 最小、偏置最大：V_ov1 使尾节点低于地
        x = DesignVector([100e-9, 480e-9, 600e-9, 2.4e-6, 1.2e-6, 100e-6])
        r = evaluate_tsmcoa_analytic(x)
        assert r.failure == "unrealizable"
        assert r.metrics == {}

    def test_wrong_dimension(self):
        r = evaluate_tsmcoa_analytic(DesignVector([1e-6] * 5))
        assert r.failure == "invalid_input"

    def test_invalid_params(self):
        with pytest.raises(ValueError):
            AnalyticDeviceParams(c_load=0.0)

    def test_default_compensation_capacitor(self):
        assert AnalyticDeviceParams().c_comp == pytest.approx(60e-15)


# ============================================
# BGR
# ============================================

def _bgr_vector(r1=3.5e3, r2=None, w12=20e-6, w34=20e-6, w5=20e-6, l12=1e-6, l34=1e-6, l5=1e-6):
    if r2 is None:
        r2 = BgrParams().optimal_ratio() * r1
    return DesignVector([w12, w34, w5, r1, r2, l12, l34, l5])


class TestBgr:

    def test_optimal_ratio(self):
        assert BgrParams().optimal_ratio() == pytest.approx(11.16, abs=5e-3)

    def test_tc_vanishes_at_optimal_ratio(self):
        r = evaluate_bgr_analytic(_bgr_vector())
        assert r.failure is None
        assert abs(r.metrics["tc"]) < 1.0
        assert r.metrics["delta_vref"] < 1e-6

    def test_tc_minimum_brackets_optimal_ratio(self):
        best = BgrParams().optimal_ratio()
        sweep = [best * f for f in (0.8, 0.9, 0.95, 1.0, 1.05, 1.1, 1.2)]
        tcs = [abs(evaluate_bgr_analytic(_bgr_vector(r2=3.5e3 * k)).metrics["tc"]) for k in sweep]
        assert tcs.index(min(tcs)) == 3

    def test_pure_ctat_when_r2_zero(self):
        p = BgrParams()
        r = evaluate_bgr_analytic(_bgr_vector(r2=0.0))
        vbe27 = p.vbe(27.0 + 273.15)
        assert r.metrics["tc"] < 0
        assert r.metrics["tc"] == pytest.approx(-p.k_ctat * 1e6 / vbe27, rel=1e-9)

    def test_doubling_resistors(self):
        base = evaluate_bgr_analytic(_bgr_vector(r1=2e3, r2=30e3))
        double = evaluate_bgr_analytic(_bgr_vector(r1=4e3, r2=60e3))
        assert double.metrics["tc"] == pytest.approx(base.metrics["tc"], rel=1e-12)
        assert double.metrics["vref@T27"] == pytest.approx(base.metrics["vref@T27"], rel=1e-12)
        assert double.metrics["power"] == pytest.approx(base.metrics["power"] / 2, rel=1e-12)

    def test_keys_cover_problem(self):
        r = evaluate_bgr_analytic(_bgr_vector())
        problem = bgr_problem()
        assert set(problem.saturation_keys()) == set(r.saturation)
        for key in problem.required_metric_keys():
            assert key in r.metrics

    def test_noise_grows_with_r2(self):
        low = evaluate_bgr_analytic(_bgr_vector(r2=10e3))
        high = evaluate_bgr_analytic(_bgr_vector(r2=100e3))
        assert high.metrics["noise"] > low.metrics["noise"]

    def test_weak_inversion_not_saturated(self):
        # 很宽很短的器件、小电流：V_ov 低于强反型下限
        x = _bgr_vector(w12=50e-6, w34=50e-6, w5=50e-6, l12=180e-9, l34=180e-9, l5=180e-9, r1=20e3)
        r = evaluate_bgr_analytic(x)
        assert r.failure is None
        assert not any(r.saturation.values())

    @pytest.mark.parametrize("r1", [0.0, -100.0])
    def test_non_positive_r1(self, r1):
        r = evaluate_bgr_analytic(_bgr_vector(r1=r1, r2=10e3))
        assert r.failure == "invalid_input"

    def test_wrong_dimension(self):
        assert evaluate_bgr_analytic(DesignVector([1.0] * 7)).failure == "invalid_input"

    def test_optimal_ratio_falls_with_emitter_ratio(self):
        params = replace(BgrParams(), emitter_ratio=24)
        assert params.optimal_ratio() < BgrParams().optimal_ratio()


class TestBgrGridCrossCheck:

    def test_ga_optimum_inside_grid_minimum_neighbourhood(self):
        problem = bgr_problem()
        trace = run(problem, BgrAnalyticEvaluator(), GaConfig(mode="MGA", seed=11))
        assert trace.feasible
        best = list(trace.best.vector.values)
        ga_ratio = best[4] / best[3]

        # 固定其余六个变量，在 (R1, R2) 上做稠密网格，只保留可行点
        r1_var, r2_var = problem.variables[3], problem.variables[4]
        r1_grid = np.linspace(r1_var.lower, r1_var.upper, 46)
        r2_grid = np.linspace(r2_var.lower, r2_var.upper, 150)
        tc = np.full((r1_grid.size, r2_grid.size), np.inf)
        for i, r1 in enumerate(r1_grid):
            for j, r2 in enumerate(r2_grid):
                x = DesignVector(best[:3] + [r1, r2] + best[5:])
                r = evaluate_bgr_analytic(x)
                if r.failure is None and check_constraints(r, problem, x).overall:
                    tc[i, j] = abs(r.metrics["tc"])
        assert np.isfinite(tc).any()

        i, j = np.unravel_index(int(np.argmin(tc)), tc.shape)
        rows = r1_grid[max(i - 1, 0):i + 2]
        cols = r2_grid[max(j - 1, 0):j + 2]
        neighbour_ratios = cols[None, :] / rows[:, None]
        assert neighbour_ratios.min() <= ga_ratio <= neighbour_ratios.max()
        assert trace.best_fitness <= tc[max(i - 1, 0):i + 2, max(j - 1, 0):j + 2].max()
