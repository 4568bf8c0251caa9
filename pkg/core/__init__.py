"""
模拟电路尺寸优化核心模块
提供问题定义、解析评估器、LHS 数据库、代理模型、遗传算法与实验编排
"""

from .circuit import (
    Bounds, ConstraintSpec, DesignVector, EvaluationResult, FeasibilityReport, Objective,
    ProblemSpec, WeightedObjective, check_constraints, compute_area, compute_tc, weighted_fitness,
)
from .evaluator import Evaluator, counted, make_evaluator
from .harness import (
    ExperimentConfig, TrainingConfig, load_config, report_convergence, run_experiment, train_models,
)
from .optimizer import GaConfig, GateMode, RunTrace, feasibility_check, run, run_sga
from .problems import get_problem, load_problem, save_problem
from .sampling import Dataset, build_database, lhs_sample

__all__ = [
    'Bounds',
    'DesignVector',
    'ConstraintSpec',
    'Objective',
    'WeightedObjective',
    'ProblemSpec',
    'EvaluationResult',
    'FeasibilityReport',
    'compute_tc',
    'compute_area',
    'weighted_fitness',
    'check_constraints',
    'get_problem',
    'load_problem',
    'save_problem',
    'Evaluator',
    'counted',
    'make_evaluator',
    'lhs_sample',
    'build_database',
    'Dataset',
    'GaConfig',
    'GateMode',
    'RunTrace',
    'feasibility_check',
    'run',
    'run_sga',
    'ExperimentConfig',
    'TrainingConfig',
    'load_config',
    'train_models',
    'run_experiment',
    'report_convergence',
]
