"""
解析器件模型常数

数值取自通用 65 nm / 180 nm 级工艺的典型量级，不对应任何具体 PDK，
由此得到的指标都只在本模型内有意义。修改任何数值时同步提升 MODEL_VERSION，
已训练的模型包会在 provenance 中记录该版本。
"""

MODEL_VERSION = "1.0"

BOLTZMANN = 1.380649e-23          # J/K
ELECTRON_CHARGE = 1.602176634e-19  # C
KELVIN_OFFSET = 273.15

# 两级米勒补偿运放 (65 nm 级，L = 60 nm)
TSMCOA_MU_N_COX = 400e-6     # A/V²
TSMCOA_MU_P_COX = 200e-6     # A/V²
TSMCOA_VTHN = 0.35           # V
TSMCOA_VTHP = 0.25           # V，幅值
TSMCOA_LAMBDA_N = 1.0        # 1/V
TSMCOA_LAMBDA_P = 1.0        # 1/V
TSMCOA_VDD = 1.1             # V
TSMCOA_C_LOAD = 200e-15      # F
TSMCOA_CC_RATIO = 0.3        # C_c = 0.3 · C_L
TSMCOA_ICMR = (0.6, 1.0)     # V
TSMCOA_CHANNEL_LENGTH = 60e-9
TSMCOA_TEMPERATURE = 300.0   # K

# 带隙基准 (180 nm 级)
BGR_VDD = 1.8
BGR_MU_N_COX = 300e-6        # A/V²，T0 处
BGR_MU_P_COX = 80e-6
BGR_VTHN = 0.45
BGR_VTHP = 0.45
BGR_VTH_TEMPCO = 1e-3        # V/K，阈值随温度下降
BGR_MOBILITY_EXPONENT = 1.5  # µ ∝ (T/T0)^-1.5
BGR_VBE0 = 0.65              # V，T0 处
BGR_K_CTAT = 2.0e-3          # V/K
BGR_T0 = 300.15              # K (27 °C)
BGR_EMITTER_RATIO = 8
BGR_LAMBDA0 = 0.2            # 1/V，L = 180 nm 处；λ ∝ 1/L
BGR_LAMBDA_REF_LENGTH = 180e-9
BGR_NOISE_KF = 1e-19         # V²·m²，1/f 噪声的集总系数
BGR_NOISE_FREQUENCY = 1e6    # Hz
BGR_MIN_OVERDRIVE = 0.04     # V，低于此值视为弱反型
