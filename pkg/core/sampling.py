"""
拉丁超立方采样与训练数据库

数据库按 LHS 点的顺序逐行记录所有约束指标和 (晶体管, 工况) 饱和标志，
以 CSV + <name>.schema.json 的形式保存。
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .circuit import Bounds, DesignVector, EvaluationResult, ProblemSpec
from .errors import DatabaseBuildError, DatasetError

logger = logging.getLogger(__name__)

METRIC_PREFIX = "metric:"
LABEL_PREFIX = "sat:"
FAILED_COLUMN = "failed"


def lhs_sample(n: int, bounds: Bounds, rng_seed: int) -> np.ndarray:
    """
    拉丁超立方采样

    每一维被等分为 n 个区间，每个区间恰好一个点，区间内位置均匀随机，
    各列的区间排列相互独立。

    Returns:
        n×D 矩阵
    """
    if n < 1:
        raise ValueError(f"样本数必须 ≥ 1，当前为 {n}")
    rng = np.random.default_rng(rng_seed)
    dim = bounds.dim
    strata = np.empty((n, dim))
    for d in range(dim):
        strata[:, d] = rng.permutation(n)
    unit = (strata + rng.random((n, dim))) / n
    return bounds.lower_array() + unit * bounds.width()


@dataclass
class Dataset:
    """训练数据库：特征矩阵、指标列、饱和标签列和失败标记"""
    problem: str
    variables: Tuple[str, ...]
    bounds: Bounds
    features: np.ndarray
    targets: Dict[str, np.ndarray] = field(default_factory=dict)
    labels: Dict[str, np.ndarray] = field(default_factory=dict)
    failed: Optional[np.ndarray] = None
    seed: Optional[int] = None

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float).reshape(-1, len(self.variables))
        n = self.features.shape[0]
        if not np.all(np.isfinite(self.features)):
            raise DatasetError("特征矩阵含非有限值")
        if self.failed is None:
            self.failed = np.zeros(n, dtype=bool)
        self.failed = np.asarray(self.failed, dtype=bool)
        self.targets = {k: np.asarray(v, dtype=float) for k, v in self.targets.items()}
        self.labels = {k: np.asarray(v, dtype=bool) for k, v in self.labels.items()}
        for name, column in [("failed", self.failed), *self.targets.items(), *self.labels.items()]:
            if column.shape != (n,):
                raise DatasetError(f"列 {name} 的长度 {column.shape} 与样本数 {n} 不一致")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    def subset(self, rows: Sequence[int]) -> "Dataset":
        idx = np.asarray(rows, dtype=int)
        return Dataset(
            problem=self.problem,
            variables=self.variables,
            bounds=self.bounds,
            features=self.features[idx],
            targets={k: v[idx] for k, v in self.targets.items()},
            labels={k: v[idx] for k, v in self.labels.items()},
            failed=self.failed[idx],
            seed=self.seed,
        )

    def regression_rows(self, key: str) -> np.ndarray:
        """可用于回归的行：未失败且目标为有限值"""
        return ~self.failed & np.isfinite(self.targets[key])


def dataset_hash(dset: Dataset) -> str:
    """特征、指标与标签内容的 sha256，用于模型包溯源"""
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(dset.features).tobytes())
    for key in sorted(dset.targets):
        h.update(key.encode("utf-8"))
        h.update(np.ascontiguousarray(dset.targets[key]).tobytes())
    for key in sorted(dset.labels):
        h.update(key.encode("utf-8"))
        h.update(np.ascontiguousarray(dset.labels[key]).tobytes())
    h.update(np.ascontiguousarray(dset.failed).tobytes())
    return h.hexdigest()


def build_database(p: ProblemSpec, e, n: int, rng_seed: int, workers: int = 1) -> Dataset:
    """
    在 n 个 LHS 点上调用评估器，生成训练数据库

    失败的评估保留该行：指标记为 NaN，饱和标签记为 False。
    评估器抛出的异常包装为 DatabaseBuildError 并带上样本序号。

    Args:
        p: 问题定义
        e: 评估器
        n: 样本数，0 时返回空数据集
        rng_seed: LHS 随机种子
        workers: 并发评估线程数

    Returns:
        Dataset，第 i 行特征等于第 i 个 LHS 点
    """
    bounds = p.bounds
    if n == 0:
        points = np.empty((0, p.dim))
    else:
        points = lhs_sample(n, bounds, rng_seed)

    def evaluate(index: int) -> EvaluationResult:
        try:
            return e.evaluate(DesignVector(points[index]))
        except Exception as exc:  # noqa: BLE001
            raise DatabaseBuildError(f"第 {index} 个样本点评估失败: {exc}", index) from exc

    logger.info(f"开始生成 {p.name} 数据库: {n} 个样本点, {workers} 个线程")
    if workers > 1 and n > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results: List[EvaluationResult] = list(pool.map(evaluate, range(n)))
    else:
        results = [evaluate(i) for i in range(n)]

    metric_keys = list(dict.fromkeys(p.required_metric_keys()))
    for r in results:
        for key in r.metrics:
            if key not in metric_keys:
                metric_keys.append(key)
    targets = {k: np.array([r.metrics.get(k, math.nan) if r.failure is None else math.nan
                            for r in results], dtype=float) for k in metric_keys}
    labels = {k: np.array([r.failure is None and bool(r.saturation.get(k, False)) for r in results],
                          dtype=bool) for k in p.saturation_keys()}
    failed = np.array([r.failure is not None for r in results], dtype=bool)
    if n:
        logger.info(f"数据库生成完成: {n} 行, 失败 {int(failed.sum())} 行")
    return Dataset(p.name, p.variable_names, bounds, points, targets, labels, failed, rng_seed)


def split(dset: Dataset, train_fraction: float, rng_seed: int) -> Tuple[Dataset, Dataset]:
    """随机划分训练集与测试集，训练集 ⌊n·f⌋ 行"""
    if not 0 < train_fraction < 1:
        raise ValueError(f"训练比例必须在 (0, 1) 内，当前为 {train_fraction}")
    order = np.random.default_rng(rng_seed).permutation(dset.n)
    n_train = int(math.floor(dset.n * train_fraction))
    return dset.subset(order[:n_train]), dset.subset(order[n_train:])


# ============================================
# CSV 持久化
# ============================================

def schema_path(path: str) -> str:
    stem, _ = os.path.splitext(path)
    return f"{stem}.schema.json"


def save_dataset(dset: Dataset, path: str) -> None:
    columns: Dict[str, Dict[str, str]] = {}
    data: Dict[str, np.ndarray] = {}
    for i, name in enumerate(dset.variables):
        data[name] = dset.features[:, i]
        columns[name] = {"kind": "feature", "key": name}
    for key, values in dset.targets.items():
        data[METRIC_PREFIX + key] = values
        columns[METRIC_PREFIX + key] = {"kind": "metric", "key": key}
    for key, values in dset.labels.items():
        data[LABEL_PREFIX + key] = values.astype(int)
        columns[LABEL_PREFIX + key] = {"kind": "label", "key": key}
    data[FAILED_COLUMN] = dset.failed.astype(int)
    columns[FAILED_COLUMN] = {"kind": "failed", "key": FAILED_COLUMN}

    pd.DataFrame(data, columns=list(columns)).to_csv(path, index=False)
    schema = {
        "problem": dset.problem,
        "n": dset.n,
        "seed": dset.seed,
        "bounds": {"lower": list(dset.bounds.lower), "upper": list(dset.bounds.upper)},
        "columns": columns,
        "hash": dataset_hash(dset),
    }
    with open(schema_path(path), "w", encoding="utf-8") as f:
        json.dump(schema, f, ensure_ascii=False, indent=2)
    logger.info(f"数据集已保存: {path}")


def load_dataset(path: str) -> Dataset:
    sidecar = schema_path(path)
    if not os.path.isfile(path) or not os.path.isfile(sidecar):
        raise DatasetError(f"数据集文件或 schema 不存在: {path}")
    try:
        with open(sidecar, "r", encoding="utf-8") as f:
            schema = json.load(f)
        frame = pd.read_csv(path)
        columns = schema["columns"]
        variables = tuple(c["key"] for c in columns.values() if c["kind"] == "feature")
        targets = {c["key"]: frame[col].to_numpy(dtype=float)
                   for col, c in columns.items() if c["kind"] == "metric"}
        labels = {c["key"]: frame[col].to_numpy().astype(bool)
                  for col, c in columns.items() if c["kind"] == "label"}
        return Dataset(
            problem=schema["problem"],
            variables=variables,
            bounds=Bounds(schema["bounds"]["lower"], schema["bounds"]["upper"]),
            features=frame[list(variables)].to_numpy(dtype=float),
            targets=targets,
            labels=labels,
            failed=frame[FAILED_COLUMN].to_numpy().astype(bool),
            seed=schema.get("seed"),
        )
    except (KeyError, ValueError) as exc:
        raise DatasetError(f"数据集格式错误: {path}: {exc}") from exc
