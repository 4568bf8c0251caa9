"""
随机森林回归（numpy 实现的 CART）

按方差减小选择分裂点；同等增益时取特征序号最小、阈值最小者。
每棵树的随机数流由 SeedSequence(rng_seed).spawn 派生，与并发线程数无关。
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ForestSpec:
    n_estimators: int = 100
    max_depth: Optional[int] = None
    min_samples_leaf: int = 1
    bootstrap: bool = True
    feature_subsample: float = 1.0 / 3.0
    rng_seed: int = 0

    def __post_init__(self):
        if self.n_estimators < 1:
            raise ValueError("n_estimators 必须 ≥ 1")
        if self.max_depth is not None and self.max_depth < 0:
            raise ValueError("max_depth 不能为负")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf 必须 ≥ 1")
        if not 0 < self.feature_subsample <= 1:
            raise ValueError("feature_subsample 必须在 (0, 1] 内")

    @property
    def label(self) -> str:
        return f"RF(n={self.n_estimators})"

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ForestSpec":
        return cls(**data)


@dataclass
class Tree:
    """数组形式的回归树，feature 为 -1 表示叶节点"""
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def node_count(self) -> int:
        return self.feature.shape[0]

    def predict(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(X.shape[0], dtype=int)
        while True:
            feat = self.feature[node]
            active = np.flatnonzero(feat >= 0)
            if active.size == 0:
                break
            current = node[active]
            go_left = X[active, feat[active]] <= self.threshold[current]
            node[active] = np.where(go_left, self.left[current], self.right[current])
        return self.value[node]


@dataclass
class ForestModel:
    spec: ForestSpec
    trees: List[Tree]
    n_features: int


def _best_split(X: np.ndarray, y: np.ndarray, features, min_leaf: int) -> Optional[Tuple[int, float]]:
    n = y.shape[0]
    parent_sse = float(np.sum((y - y.mean()) ** 2))
    best_gain = parent_sse * 1e-12
    best = None
    positions = np.arange(min_leaf - 1, n - min_leaf)
    if positions.size == 0:
        return None
    n_left = positions + 1
    n_right = n - n_left
    for f in features:
        order = np.argsort(X[:, f], kind="mergesort")
        xs = X[order, f]
        ys = y[order]
        csum = np.cumsum(ys)
        csq = np.cumsum(ys * ys)
        valid = xs[positions] < xs[positions + 1]
        if not np.any(valid):
            continue
        s_left = csum[positions]
        s_right = csum[-1] - s_left
        sse = (csq[positions] - s_left ** 2 / n_left) + ((csq[-1] - csq[positions]) - s_right ** 2 / n_right)
        sse = np.where(valid, sse, np.inf)
        k = int(np.argmin(sse))
        gain = parent_sse - float(sse[k])
        if gain > best_gain:
            best_gain = gain
            i = positions[k]
            thr = float((xs[i] + xs[i + 1]) / 2.0)
            # 相邻浮点数的中点可能舍入到右端，右子树会变空
            if thr >= xs[i + 1]:
                thr = float(xs[i])
            best = (int(f), thr)
    return best


def build_tree(X: np.ndarray, y: np.ndarray, spec: ForestSpec, rng: np.random.Generator) -> Tree:
    n, dim = X.shape
    n_sub = min(dim, max(1, int(round(spec.feature_subsample * dim))))
    feature: List[int] = [-1]
    threshold: List[float] = [0.0]
    left: List[int] = [-1]
    right: List[int] = [-1]
    value: List[float] = [float(y.mean())]

    stack = [(0, np.arange(n), 0)]
    while stack:
        node, idx, depth = stack.pop()
        ys = y[idx]
        if idx.shape[0] < 2 * spec.min_samples_leaf or np.all(ys == ys[0]):
            continue
        if spec.max_depth is not None and depth >= spec.max_depth:
            continue
        if n_sub == dim:
            candidates = range(dim)
        else:
            candidates = np.sort(rng.choice(dim, n_sub, replace=False))
        split = _best_split(X[idx], ys, candidates, spec.min_samples_leaf)
        if split is None:
            continue
        f, thr = split
        mask = X[idx, f] <= thr
        children = []
        for part in (idx[mask], idx[~mask]):
            feature.append(-1)
            threshold.append(0.0)
            left.append(-1)
            right.append(-1)
            value.append(float(y[part].mean()))
            children.append(len(value) - 1)
        feature[node], threshold[node] = f, thr
        left[node], right[node] = children
        stack.append((children[1], idx[~mask], depth + 1))
        stack.append((children[0], idx[mask], depth + 1))

    return Tree(np.array(feature, dtype=int), np.array(threshold, dtype=float),
                np.array(left, dtype=int), np.array(right, dtype=int), np.array(value, dtype=float))


def fit_rf(spec: ForestSpec, X, y, workers: int = 1) -> ForestModel:
    """
    训练随机森林

    Args:
        spec: 森林配置
        X: 原始特征（不需要标准化）
        y: 有限实数目标
        workers: 并行建树的线程数

    Returns:
        ForestModel，预测为各树均值
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("训练数据为空")
    if X.shape[0] != y.shape[0]:
        raise ValueError(f"特征行数 {X.shape[0]} 与目标长度 {y.shape[0]} 不一致")
    if not np.all(np.isfinite(y)) or not np.all(np.isfinite(X)):
        raise ValueError("训练数据含 NaN 或非有限值")

    n = X.shape[0]
    seeds = np.random.SeedSequence(spec.rng_seed).spawn(spec.n_estimators)

    def grow(seq) -> Tree:
        rng = np.random.default_rng(seq)
        rows = rng.integers(0, n, n) if spec.bootstrap else np.arange(n)
        return build_tree(X[rows], y[rows], spec, rng)

    if workers > 1 and spec.n_estimators > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            trees = list(pool.map(grow, seeds))
    else:
        trees = [grow(s) for s in seeds]
    return ForestModel(spec, trees, X.shape[1])


def predict_rf(m: ForestModel, X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != m.n_features:
        raise ValueError(f"特征维度 {X.shape[1]} 与模型输入 {m.n_features} 不一致")
    total = np.zeros(X.shape[0])
    for tree in m.trees:
        total += tree.predict(X)
    return total / len(m.trees)


def forest_arrays(m: ForestModel) -> Dict[str, np.ndarray]:
    """所有树拼接保存，offsets 记录每棵树的起始节点"""
    sizes = [t.node_count for t in m.trees]
    return {
        "offsets": np.concatenate([[0], np.cumsum(sizes)]).astype(int),
        "feature": np.concatenate([t.feature for t in m.trees]),
        "threshold": np.concatenate([t.threshold for t in m.trees]),
        "left": np.concatenate([t.left for t in m.trees]),
        "right": np.concatenate([t.right for t in m.trees]),
        "value": np.concatenate([t.value for t in m.trees]),
        "n_features": np.array([m.n_features]),
    }


def forest_from_arrays(spec: ForestSpec, arrays: Dict[str, np.ndarray]) -> ForestModel:
    offsets = np.asarray(arrays["offsets"], dtype=int)
    trees = []
    for start, stop in zip(offsets[:-1], offsets[1:]):
        trees.append(Tree(*(np.asarray(arrays[k][start:stop]) for k in
                            ("feature", "threshold", "left", "right", "value"))))
    if len(trees) != spec.n_estimators:
        raise ValueError(f"树的数量 {len(trees)} 与 n_estimators={spec.n_estimators} 不一致")
    return ForestModel(spec, trees, int(arrays["n_features"][0]))
