"""
多层感知机（numpy 实现）

隐藏层 ReLU，输出层为 logistic（二分类）或恒等（回归）。
Adam 小批量训练，按验证集损失早停并恢复最优权重。
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

logger = logging.getLogger(__name__)

TASKS = ("classifier", "regressor")

_ADAM_BETA1 = 0.9
_ADAM_BETA2 = 0.999
_ADAM_EPS = 1e-8


@dataclass(frozen=True)
class MlpSpec:
    hidden_layers: Tuple[int, ...] = (128, 64, 16)
    task: str = "classifier"
    learning_rate: float = 1e-3
    batch_size: int = 64
    max_epochs: int = 500
    patience: int = 20
    l2: float = 1e-4
    validation_fraction: float = 0.1

    def __post_init__(self):
        object.__setattr__(self, "hidden_layers", tuple(int(h) for h in self.hidden_layers))
        if not self.hidden_layers or min(self.hidden_layers) < 1:
            raise ValueError(f"隐藏层至少一层且每层至少 1 个单元: {self.hidden_layers}")
        if self.task not in TASKS:
            raise ValueError(f"未知任务类型: {self.task}")
        if not self.learning_rate > 0 or self.batch_size < 1 or self.max_epochs < 1 or self.patience < 1:
            raise ValueError("学习率、批大小、最大轮数和耐心值必须为正")
        if self.l2 < 0 or not 0 <= self.validation_fraction < 1:
            raise ValueError("l2 必须非负，验证集比例必须在 [0, 1) 内")

    @property
    def label(self) -> str:
        return f"MLP({', '.join(str(h) for h in self.hidden_layers)})"

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["hidden_layers"] = list(self.hidden_layers)
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "MlpSpec":
        return cls(**data)


@dataclass
class MlpModel:
    spec: MlpSpec
    weights: List[np.ndarray]
    biases: List[np.ndarray]
    target_mean: float = 0.0
    target_std: float = 1.0
    epochs_trained: int = 0
    history: List[float] = field(default_factory=list)

    @property
    def n_features(self) -> int:
        return self.weights[0].shape[0]

    def copy_params(self) -> Tuple[List[np.ndarray], List[np.ndarray]]:
        return [w.copy() for w in self.weights], [b.copy() for b in self.biases]


def init_mlp(spec: MlpSpec, n_features: int, seed: int) -> MlpModel:
    """He 正态初始化，偏置为 0"""
    rng = np.random.default_rng(seed)
    sizes = [n_features, *spec.hidden_layers, 1]
    weights = [rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, fan_out))
               for fan_in, fan_out in zip(sizes[:-1], sizes[1:])]
    biases = [np.zeros(fan_out) for fan_out in sizes[1:]]
    return MlpModel(spec, weights, biases)


def _forward(m: MlpModel, X: np.ndarray):
    activations = [X]
    pre = []
    a = X
    last = len(m.weights) - 1
    for i, (W, b) in enumerate(zip(m.weights, m.biases)):
        z = a @ W + b
        pre.append(z)
        a = z if i == last else np.maximum(z, 0.0)
        activations.append(a)
    return pre, activations


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def loss_and_gradients(m: MlpModel, X: np.ndarray, y: np.ndarray):
    """
    损失及各层梯度

    y 为模型内部单位：分类为 0/1，回归为标准化后的目标。
    损失为 BCE 或 0.5·MSE，加上 l2/(2n)·Σ‖W‖²。

    Returns:
        (loss, grad_weights, grad_biases)
    """
    n = X.shape[0]
    pre, acts = _forward(m, X)
    z = pre[-1][:, 0]
    if m.spec.task == "classifier":
        loss = float(np.mean(np.logaddexp(0.0, z) - y * z))
        dz = (_sigmoid(z) - y) / n
    else:
        loss = float(0.5 * np.mean((z - y) ** 2))
        dz = (z - y) / n
    if m.spec.l2:
        loss += m.spec.l2 / (2.0 * n) * sum(float(np.sum(W * W)) for W in m.weights)

    grad_w: List[np.ndarray] = [None] * len(m.weights)
    grad_b: List[np.ndarray] = [None] * len(m.biases)
    delta = dz[:, None]
    for i in range(len(m.weights) - 1, -1, -1):
        grad_w[i] = acts[i].T @ delta + m.spec.l2 * m.weights[i] / n
        grad_b[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ m.weights[i].T) * (pre[i - 1] > 0)
    return loss, grad_w, grad_b


def _check_xy(X, y, task: str):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("训练数据为空")
    if X.shape[0] != y.shape[0]:
        raise ValueError(f"特征行数 {X.shape[0]} 与目标长度 {y.shape[0]} 不一致")
    if not np.all(np.isfinite(X)) or not np.all(np.isfinite(y)):
        raise ValueError("训练数据含 NaN 或非有限值")
    if task == "classifier" and not np.all((y == 0) | (y == 1)):
        raise ValueError("分类标签必须为 0 或 1")
    return X, y


def fit_mlp(spec: MlpSpec, X, y, seed: int = 0) -> MlpModel:
    """
    训练 MLP

    Args:
        spec: 网络与训练配置
        X: 已标准化的特征矩阵
        y: 分类为 0/1 标签，回归为实数目标
        seed: 随机种子，决定初始化、验证集划分与批次顺序

    Returns:
        验证损失最优时的模型
    """
    X, y = _check_xy(X, y, spec.task)
    rng = np.random.default_rng(seed)
    model = init_mlp(spec, X.shape[1], int(rng.integers(2 ** 31)))

    if spec.task == "regressor":
        model.target_mean = float(y.mean())
        std = float(y.std())
        model.target_std = std if std > 0 else 1.0
        y = (y - model.target_mean) / model.target_std

    n = X.shape[0]
    order = rng.permutation(n)
    n_val = int(round(n * spec.validation_fraction)) if n >= 10 else 0
    val_idx, train_idx = order[:n_val], order[n_val:]
    X_val, y_val = X[val_idx], y[val_idx]

    params = model.weights + model.biases
    m1 = [np.zeros_like(p) for p in params]
    m2 = [np.zeros_like(p) for p in params]
    step = 0
    best_loss = np.inf
    best = model.copy_params()
    wait = 0
    for epoch in range(spec.max_epochs):
        shuffled = train_idx[rng.permutation(train_idx.shape[0])]
        for start in range(0, shuffled.shape[0], spec.batch_size):
            batch = shuffled[start:start + spec.batch_size]
            _, gw, gb = loss_and_gradients(model, X[batch], y[batch])
            step += 1
            lr = spec.learning_rate * np.sqrt(1 - _ADAM_BETA2 ** step) / (1 - _ADAM_BETA1 ** step)
            for k, (p, g) in enumerate(zip(params, gw + gb)):
                m1[k] = _ADAM_BETA1 * m1[k] + (1 - _ADAM_BETA1) * g
                m2[k] = _ADAM_BETA2 * m2[k] + (1 - _ADAM_BETA2) * g * g
                p -= lr * m1[k] / (np.sqrt(m2[k]) + _ADAM_EPS)

        if n_val:
            monitor, _, _ = loss_and_gradients(model, X_val, y_val)
        else:
            monitor, _, _ = loss_and_gradients(model, X[train_idx], y[train_idx])
        model.history.append(monitor)
        model.epochs_trained = epoch + 1
        if monitor < best_loss - 1e-12:
            best_loss = monitor
            best = model.copy_params()
            wait = 0
        else:
            wait += 1
            if wait >= spec.patience:
                logger.debug(f"{spec.label} 在第 {epoch + 1} 轮早停")
                break

    model.weights, model.biases = best
    return model


def predict_mlp(m: MlpModel, X) -> np.ndarray:
    """分类返回概率，回归返回原始单位的预测值"""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != m.n_features:
        raise ValueError(f"特征维度 {X.shape[1]} 与模型输入 {m.n_features} 不一致")
    pre, _ = _forward(m, X)
    z = pre[-1][:, 0]
    if m.spec.task == "classifier":
        return _sigmoid(z)
    return z * m.target_std + m.target_mean


def mlp_arrays(m: MlpModel) -> Dict[str, np.ndarray]:
    """模型权重展开为 npz 可保存的数组字典"""
    arrays = {}
    for i, (W, b) in enumerate(zip(m.weights, m.biases)):
        arrays[f"W{i}"] = W
        arrays[f"b{i}"] = b
    arrays["target"] = np.array([m.target_mean, m.target_std])
    return arrays


def mlp_from_arrays(spec: MlpSpec, arrays: Dict[str, np.ndarray],
                    epochs_trained: Optional[int] = 0) -> MlpModel:
    layers = len(spec.hidden_layers) + 1
    weights = [np.asarray(arrays[f"W{i}"], dtype=float) for i in range(layers)]
    biases = [np.asarray(arrays[f"b{i}"], dtype=float) for i in range(layers)]
    mean, std = (float(v) for v in arrays["target"])
    return MlpModel(spec, weights, biases, mean, std, epochs_trained or 0)
