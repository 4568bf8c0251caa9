"""特征标准化与模型评价指标"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np

logger = logging.getLogger(__name__)


@dataclass
class Scaler:
    """z-score 标准化，只在训练行上拟合"""
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, X: np.ndarray, names: Optional[Sequence[str]] = None) -> "Scaler":
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[0] == 0:
            raise ValueError("Scaler 需要非空的二维特征矩阵")
        mean = X.mean(axis=0)
        std = X.std(axis=0)
        constant = std == 0
        if np.any(constant):
            cols = [names[i] if names else str(i) for i in np.flatnonzero(constant)]
            logger.warning(f"常数特征 {', '.join(cols)} 的标准差取 1")
            std = np.where(constant, 1.0, std)
        return cls(mean, std)

    def transform(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.shape[-1] != self.mean.shape[0]:
            raise ValueError(f"特征维度 {X.shape[-1]} 与 Scaler 的 {self.mean.shape[0]} 不一致")
        return (X - self.mean) / self.std

    def inverse_transform(self, Z: np.ndarray) -> np.ndarray:
        return np.asarray(Z, dtype=float) * self.std + self.mean

    def to_dict(self) -> Dict[str, List[float]]:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, data) -> "Scaler":
        return cls(np.asarray(data["mean"], dtype=float), np.asarray(data["std"], dtype=float))


def _pair(pred, truth):
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape:
        raise ValueError(f"预测与真值形状不一致: {pred.shape} != {truth.shape}")
    if pred.size == 0:
        raise ValueError("预测结果为空")
    return pred, truth


def accuracy(pred, truth) -> float:
    pred, truth = _pair(pred, truth)
    return float(np.mean(pred.astype(bool) == truth.astype(bool)))


def r2(pred, truth) -> float:
    """决定系数 1 - SS_res/SS_tot；真值为常数时预测完全相同记 1，否则 0"""
    pred, truth = _pair(np.asarray(pred, dtype=float), np.asarray(truth, dtype=float))
    ss_res = float(np.sum((truth - pred) ** 2))
    ss_tot = float(np.sum((truth - truth.mean()) ** 2))
    if ss_tot == 0:
        return 1.0 if ss_res == 0 else 0.0
    return 1.0 - ss_res / ss_tot


def mae(pred, truth) -> float:
    pred, truth = _pair(np.asarray(pred, dtype=float), np.asarray(truth, dtype=float))
    return float(np.mean(np.abs(pred - truth)))
