"""
解析电路模型

用一阶平方律公式代替 SPICE，为 TSMCOA 和 BGR 两个问题给出完整的指标与
饱和标志。两个评估函数都是纯函数：同样的输入给出逐位相同的结果。
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

from . import device_constants as dc
from .circuit import DesignVector, EvaluationResult, compute_tc, metric_key


class _Unrealizable(Exception):
    pass


def _sqrt(value: float, what: str) -> float:
    if value < 0 or not math.isfinite(value):
        raise _Unrealizable(f"{what} 的平方根操作数为负: {value}")
    return math.sqrt(value)


def _gm(mu_cox: float, aspect: float, current: float) -> float:
    return _sqrt(2.0 * mu_cox * aspect * current, "gm")


def _overdrive(mu_cox: float, aspect: float, current: float) -> float:
    return _sqrt(2.0 * current / (mu_cox * aspect), "V_ov")


def _parallel(a: float, b: float) -> float:
    return a * b / (a + b)


# ============================================
# 两级米勒补偿运放
# ============================================

@dataclass(frozen=True)
class AnalyticDeviceParams:
    """TSMCOA 解析模型参数，Vthp 存幅值"""
    mu_n_cox: float = dc.TSMCOA_MU_N_COX
    mu_p_cox: float = dc.TSMCOA_MU_P_COX
    vthn: float = dc.TSMCOA_VTHN
    vthp: float = dc.TSMCOA_VTHP
    lambda_n: float = dc.TSMCOA_LAMBDA_N
    lambda_p: float = dc.TSMCOA_LAMBDA_P
    vdd: float = dc.TSMCOA_VDD
    c_load: float = dc.TSMCOA_C_LOAD
    c_comp: Optional[float] = None
    icmr: Tuple[float, float] = dc.TSMCOA_ICMR
    channel_length: float = dc.TSMCOA_CHANNEL_LENGTH
    temperature: float = dc.TSMCOA_TEMPERATURE
    contexts: Tuple[str, str] = ("icmr_min", "icmr_max")

    def __post_init__(self):
        if self.c_comp is None:
            object.__setattr__(self, "c_comp", dc.TSMCOA_CC_RATIO * self.c_load)
        for name in ("mu_n_cox", "mu_p_cox", "vthn", "vthp", "lambda_n", "lambda_p",
                     "vdd", "c_load", "c_comp", "channel_length", "temperature"):
            if not getattr(self, name) > 0:
                raise ValueError(f"解析模型参数 {name} 必须为正")


def evaluate_tsmcoa_analytic(x: DesignVector, params: Optional[AnalyticDeviceParams] = None) -> EvaluationResult:
    """
    TSMCOA 平方律模型

    M5、M7 与二极管连接的 M8 组成电流镜；M5 与 M8 同尺寸，故 I5 = Ibias，
    I7 = Ibias·W7/W58。
    第一级输出节点由 M6 所需的 V_SG6 决定，输出节点固定在 V_DD/2。
    某个 ICMR 工况下尾节点电压 ≤ 0 或内部节点超出 [0, V_DD] 时，
    返回 failure='unrealizable' 的结果。

    Args:
        x: [W12, W34, W58, W6, W7, Ibias]
        params: 器件参数，缺省使用 device_constants 中的数值

    Returns:
        EvaluationResult，指标键形如 gain@icmr_min
    """
    p = params or AnalyticDeviceParams()
    if x.dim != 6:
        return EvaluationResult.failed("invalid_input", f"TSMCOA 需要 6 个变量，收到 {x.dim} 个")
    w12, w34, w58, w6, w7, ibias = x.values
    if min(w12, w34, w58, w6, w7, ibias) <= 0:
        return EvaluationResult.failed("invalid_input", "宽度和偏置电流必须为正")

    length = p.channel_length
    a1, a3, a5, a6, a7 = (w / length for w in (w12, w34, w58, w6, w7))
    i5 = ibias
    i1 = i5 / 2.0
    i7 = ibias * w7 / w58

    try:
        gm1 = _gm(p.mu_n_cox, a1, i1)
        gm3 = _gm(p.mu_p_cox, a3, i1)
        gm6 = _gm(p.mu_p_cox, a6, i7)
        ro2, ro4 = 1.0 / (p.lambda_n * i1), 1.0 / (p.lambda_p * i1)
        ro6, ro7 = 1.0 / (p.lambda_p * i7), 1.0 / (p.lambda_n * i7)
        gain = gm1 * _parallel(ro2, ro4) * gm6 * _parallel(ro6, ro7)
        ugb = gm1 / (2.0 * math.pi * p.c_comp)
        f_p2 = gm6 / (2.0 * math.pi * p.c_load)
        pm = 90.0 - math.degrees(math.atan(ugb / f_p2))
        f3db = ugb / gain
        slew_rate = i5 / p.c_comp
        power = p.vdd * (ibias + i5 + i7)
        kt = dc.BOLTZMANN * p.temperature
        noise = _sqrt(16.0 * kt / (3.0 * gm1) * (1.0 + gm3 / gm1), "S_n")

        vov1 = _overdrive(p.mu_n_cox, a1, i1)
        vov3 = _overdrive(p.mu_p_cox, a3, i1)
        vov5 = _overdrive(p.mu_n_cox, a5, i5)
        vov6 = _overdrive(p.mu_p_cox, a6, i7)
        vov7 = _overdrive(p.mu_n_cox, a7, i7)
        v_d1 = p.vdd - (p.vthp + vov3)
        v_d2 = p.vdd - (p.vthp + vov6)
        v_out = p.vdd / 2.0

        metrics: Dict[str, float] = {
            "power": power,
            "area": length * (2 * w12 + 2 * w34 + 2 * w58 + w6 + w7),
        }
        saturation: Dict[str, bool] = {}
        for ctx, vcm in zip(p.contexts, p.icmr):
            v_tail = vcm - p.vthn - vov1
            if v_tail <= 0 or not (0 <= v_d1 <= p.vdd) or not (0 <= v_d2 <= p.vdd):
                raise _Unrealizable(f"{ctx} 工况下节点电压无效 (V_tail={v_tail:.4f} V)")
            checks = {
                "M1": v_d1 - v_tail >= vov1,
                "M2": v_d2 - v_tail >= vov1,
                "M3": True,
                "M4": p.vdd - v_d2 >= vov3,
                "M5": v_tail >= vov5,
                "M6": p.vdd - v_out >= vov6,
                "M7": v_out >= vov7,
                "M8": True,
            }
            for name, ok in checks.items():
                saturation[metric_key(name, ctx)] = ok
            metrics[metric_key("gain", ctx)] = 20.0 * math.log10(gain)
            metrics[metric_key("ugb", ctx)] = ugb
            metrics[metric_key("f3db", ctx)] = f3db
            metrics[metric_key("pm", ctx)] = pm
            metrics[metric_key("slew_rate", ctx)] = slew_rate
            metrics[metric_key("noise", ctx)] = noise
    except _Unrealizable as exc:
        return EvaluationResult.failed("unrealizable", str(exc))
    return EvaluationResult(metrics=metrics, saturation=saturation)


# ============================================
# 带隙基准
# ============================================

@dataclass(frozen=True)
class BgrParams:
    vdd: float = dc.BGR_VDD
    mu_n_cox: float = dc.BGR_MU_N_COX
    mu_p_cox: float = dc.BGR_MU_P_COX
    vthn: float = dc.BGR_VTHN
    vthp: float = dc.BGR_VTHP
    vth_tempco: float = dc.BGR_VTH_TEMPCO
    mobility_exponent: float = dc.BGR_MOBILITY_EXPONENT
    vbe0: float = dc.BGR_VBE0
    k_ctat: float = dc.BGR_K_CTAT
    t0: float = dc.BGR_T0
    emitter_ratio: float = dc.BGR_EMITTER_RATIO
    lambda0: float = dc.BGR_LAMBDA0
    lambda_ref_length: float = dc.BGR_LAMBDA_REF_LENGTH
    noise_kf: float = dc.BGR_NOISE_KF
    noise_frequency: float = dc.BGR_NOISE_FREQUENCY
    min_overdrive: float = dc.BGR_MIN_OVERDRIVE
    temperatures: Dict[str, float] = field(
        default_factory=lambda: {"T-40": -40.0, "T27": 27.0, "T125": 125.0})
    saturation_contexts: Tuple[str, ...] = ("T-40", "T125")

    def thermal_voltage(self, t_kelvin: float) -> float:
        return dc.BOLTZMANN * t_kelvin / dc.ELECTRON_CHARGE

    def vbe(self, t_kelvin: float) -> float:
        return self.vbe0 - self.k_ctat * (t_kelvin - self.t0)

    def optimal_ratio(self) -> float:
        """PTAT 斜率恰好抵消 CTAT 斜率时的 R2/R1"""
        return self.k_ctat / (math.log(self.emitter_ratio) * dc.BOLTZMANN / dc.ELECTRON_CHARGE)


def evaluate_bgr_analytic(x: DesignVector, bgr_params: Optional[BgrParams] = None) -> EvaluationResult:
    """
    BGR 一阶模型

    V_REF(T) = V_BE(T) + (R2/R1)·V_T·ln(n)，支路电流 I = V_T·ln(n)/R1，
    三条支路总功耗取最热工况。PSRR 按 M5 输出电阻与 R2 加 BJT 小信号
    电阻的分压计算；S_n 为 1 MHz 处 M3/M4 的 1/f 噪声经 (1 + R2/R1) 放大
    再加 R2 热噪声，两者都是为约束筛选标定的平滑函数。
    饱和判据：V_DS ≥ V_ov 且 V_ov ≥ min_overdrive（强反型）。

    Args:
        x: (W12, W34, W5, R1, R2, L12, L34, L5)
        bgr_params: 模型参数

    Returns:
        EvaluationResult
    """
    p = bgr_params or BgrParams()
    if x.dim != 8:
        return EvaluationResult.failed("invalid_input", f"BGR 需要 8 个变量，收到 {x.dim} 个")
    w12, w34, w5, r1, r2, l12, l34, l5 = x.values
    if r1 <= 0:
        return EvaluationResult.failed("invalid_input", f"R1 必须为正，当前为 {r1}")
    if r2 < 0 or min(w12, w34, w5, l12, l34, l5) <= 0:
        return EvaluationResult.failed("invalid_input", "R2 不能为负，尺寸必须为正")

    ln_n = math.log(p.emitter_ratio)
    ratio = r2 / r1
    kelvin = {ctx: t + dc.KELVIN_OFFSET for ctx, t in p.temperatures.items()}
    vref = {ctx: p.vbe(t) + ratio * p.thermal_voltage(t) * ln_n for ctx, t in kelvin.items()}

    metrics: Dict[str, float] = {metric_key("vref", ctx): v for ctx, v in vref.items()}
    try:
        metrics["tc"] = compute_tc(vref["T-40"], vref["T125"], vref["T27"])
    except ValueError as exc:
        return EvaluationResult.failed("unrealizable", str(exc))
    metrics["delta_vref"] = abs(vref["T125"] - vref["T-40"])

    t_hot = max(kelvin.values())
    i_hot = p.thermal_voltage(t_hot) * ln_n / r1
    metrics["power"] = p.vdd * 3.0 * i_hot

    t_nom = kelvin["T27"]
    i_nom = p.thermal_voltage(t_nom) * ln_n / r1
    r_out5 = 1.0 / (p.lambda0 * p.lambda_ref_length / l5 * i_nom)
    r_bjt = p.thermal_voltage(t_nom) / i_nom
    metrics["psrr"] = 20.0 * math.log10((r_out5 + r2 + r_bjt) / (r2 + r_bjt))

    flicker = (1.0 + ratio) ** 2 * p.noise_kf / (w34 * l34 * p.noise_frequency)
    thermal = 4.0 * dc.BOLTZMANN * t_nom * r2
    metrics["noise"] = math.sqrt(flicker + thermal)
    metrics["area"] = 2 * w12 * l12 + 2 * w34 * l34 + w5 * l5

    saturation: Dict[str, bool] = {}
    try:
        for ctx in p.saturation_contexts:
            t = kelvin[ctx]
            scale = (t / p.t0) ** (-p.mobility_exponent)
            mu_n, mu_p = p.mu_n_cox * scale, p.mu_p_cox * scale
            vthp = p.vthp - p.vth_tempco * (t - p.t0)
            current = p.thermal_voltage(t) * ln_n / r1
            vov12 = _overdrive(mu_p, w12 / l12, current)
            vov34 = _overdrive(mu_n, w34 / l34, current)
            vov5 = _overdrive(mu_p, w5 / l5, current)
            vds34 = p.vdd - (vthp + vov12) - p.vbe(t)
            vsd5 = p.vdd - vref[ctx]
            strong12 = vov12 >= p.min_overdrive
            sat34 = vov34 >= p.min_overdrive and vds34 >= vov34
            sat5 = vov5 >= p.min_overdrive and vsd5 >= vov5
            saturation[metric_key("M1", ctx)] = strong12
            saturation[metric_key("M2", ctx)] = strong12
            saturation[metric_key("M3", ctx)] = sat34
            saturation[metric_key("M4", ctx)] = sat34
            saturation[metric_key("M5", ctx)] = sat5
    except _Unrealizable as exc:
        return EvaluationResult.failed("unrealizable", str(exc))
    return EvaluationResult(metrics=metrics, saturation=saturation)
