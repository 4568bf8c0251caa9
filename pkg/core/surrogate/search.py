"""k 折交叉验证网格搜索"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Mapping, Optional, Sequence, Union

import numpy as np

from .forest import ForestSpec, fit_rf, predict_rf
from .metrics import Scaler, accuracy, r2
from .mlp import MlpSpec, fit_mlp, predict_mlp

logger = logging.getLogger(__name__)

FAMILIES = ("mlp_classifier", "mlp_regressor", "rf")


@dataclass
class GridSearchResult:
    best_params: Dict[str, Any]
    best_spec: Union[MlpSpec, ForestSpec]
    best_score: float
    table: List[Dict[str, Any]] = field(default_factory=list)


def kfold_indices(n: int, k: int, seed: int) -> List[np.ndarray]:
    """打乱后切成 k 份，返回每折的验证行号；每行恰好属于一个验证折"""
    if k < 2:
        raise ValueError(f"折数必须 ≥ 2，当前为 {k}")
    if n < k:
        raise ValueError(f"样本数 {n} 少于折数 {k}")
    order = np.random.default_rng(seed).permutation(n)
    return [np.sort(part) for part in np.array_split(order, k)]


def expand_grid(param_grid: Mapping[str, Sequence[Any]]) -> List[Dict[str, Any]]:
    """按键的给定顺序做笛卡尔积"""
    if not param_grid:
        raise ValueError("参数网格为空")
    keys = list(param_grid)
    values = [list(param_grid[k]) for k in keys]
    if any(not v for v in values):
        raise ValueError("参数网格中存在空的取值列表")
    return [dict(zip(keys, combo)) for combo in itertools.product(*values)]


def default_spec(model_family: str) -> Union[MlpSpec, ForestSpec]:
    if model_family == "mlp_classifier":
        return MlpSpec(task="classifier")
    if model_family == "mlp_regressor":
        return MlpSpec(task="regressor")
    if model_family == "rf":
        return ForestSpec()
    raise ValueError(f"未知模型类型: {model_family}")


def _fit_score(model_family: str, spec, X_train, y_train, X_val, y_val, seed: int) -> float:
    if model_family == "rf":
        model = fit_rf(spec, X_train, y_train)
        return r2(predict_rf(model, X_val), y_val)
    scaler = Scaler.fit(X_train)
    model = fit_mlp(spec, scaler.transform(X_train), y_train, seed)
    pred = predict_mlp(model, scaler.transform(X_val))
    if model_family == "mlp_classifier":
        return accuracy(pred >= 0.5, y_val.astype(bool))
    return r2(pred, y_val)


def grid_search(model_family: str, param_grid: Mapping[str, Sequence[Any]], X, y,
                k_folds: int = 3, seed: int = 0,
                base_spec: Optional[Union[MlpSpec, ForestSpec]] = None) -> GridSearchResult:
    """
    穷举网格，按 k 折平均得分（分类用准确率，回归用 R²）选最优

    得分相同时取网格顺序中靠前的一组。X 为原始特征，MLP 类模型在每折的训练行上单独拟合标准化。

    Args:
        model_family: 'mlp_classifier' | 'mlp_regressor' | 'rf'
        param_grid: 参数名到候选值列表，参数名为 MlpSpec/ForestSpec 的字段
        X, y: 训练数据
        k_folds: 折数
        seed: 折划分与训练的随机种子
        base_spec: 网格之外的其余配置

    Returns:
        GridSearchResult，table 每行含 params、mean、std、fold_scores
    """
    if model_family not in FAMILIES:
        raise ValueError(f"未知模型类型: {model_family}")
    cells = expand_grid(param_grid)
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    base = base_spec or default_spec(model_family)
    folds = kfold_indices(X.shape[0], k_folds, seed)

    table: List[Dict[str, Any]] = []
    best_index = 0
    for i, params in enumerate(cells):
        spec = replace(base, **params)
        scores = []
        for f, val_idx in enumerate(folds):
            train_mask = np.ones(X.shape[0], dtype=bool)
            train_mask[val_idx] = False
            scores.append(_fit_score(model_family, spec, X[train_mask], y[train_mask],
                                     X[val_idx], y[val_idx], seed + f))
        row = {"params": params, "mean": float(np.mean(scores)), "std": float(np.std(scores)),
               "fold_scores": [float(s) for s in scores]}
        table.append(row)
        logger.debug(f"网格 {params}: CV 得分 {row['mean']:.4f}")
        if row["mean"] > table[best_index]["mean"]:
            best_index = i

    best = table[best_index]
    return GridSearchResult(dict(best["params"]), replace(base, **best["params"]), best["mean"], table)
