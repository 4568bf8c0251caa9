"""
代理模型包

一个问题的全部饱和分类器与约束回归模型、特征标准化参数和溯源信息。
保存为目录：manifest.json + models/ 下每个模型一个 npz 权重文件。
"""

from __future__ import annotations

import json
import logging
import os
import warnings
import zipfile
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np

from ..device_constants import MODEL_VERSION
from ..errors import BundleFormatError, BundleProvenanceWarning
from ..sampling import dataset_hash
from .forest import ForestModel, ForestSpec, forest_arrays, forest_from_arrays, predict_rf
from .metrics import Scaler
from .mlp import MlpModel, MlpSpec, mlp_arrays, mlp_from_arrays, predict_mlp

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"
MODELS_DIR = "models"
BUNDLE_FORMAT = 1
TRANSFORMS = ("identity", "log10")
CLASSIFIER_THRESHOLD = 0.5


@dataclass
class Regressor:
    """回归模型及其目标变换；MLP 使用标准化特征，RF 使用原始特征"""
    kind: str
    model: Union[MlpModel, ForestModel]
    transform: str = "identity"

    def __post_init__(self):
        if self.kind not in ("mlp", "rf"):
            raise ValueError(f"未知回归模型类型: {self.kind}")
        if self.transform not in TRANSFORMS:
            raise ValueError(f"未知目标变换: {self.transform}")

    @property
    def label(self) -> str:
        return self.model.spec.label

    def predict(self, X_raw: np.ndarray, scaler: Scaler) -> np.ndarray:
        if self.kind == "rf":
            out = predict_rf(self.model, X_raw)
        else:
            out = predict_mlp(self.model, scaler.transform(X_raw))
        return np.power(10.0, out) if self.transform == "log10" else out


def forward_transform(transform: str, y: np.ndarray) -> np.ndarray:
    return np.log10(y) if transform == "log10" else y


@dataclass
class SurrogateBundle:
    problem: str
    variables: Sequence[str]
    scaler: Scaler
    classifiers: Dict[str, MlpModel] = field(default_factory=dict)
    regressors: Dict[str, Regressor] = field(default_factory=dict)
    provenance: Dict[str, Any] = field(default_factory=dict)
    metrics: List[Dict[str, Any]] = field(default_factory=list)

    def classifier_keys(self) -> List[str]:
        return list(self.classifiers)

    def regressor_keys(self) -> List[str]:
        return list(self.regressors)

    def _raw(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != len(self.variables):
            raise ValueError(f"特征维度 {X.shape[1]} 与模型包的 {len(self.variables)} 个变量不一致")
        return X

    def predict_saturation(self, X) -> Dict[str, np.ndarray]:
        """每个 (晶体管, 工况) 的饱和预测（概率 ≥ 0.5 记为饱和）"""
        Z = self.scaler.transform(self._raw(X))
        return {k: predict_mlp(m, Z) >= CLASSIFIER_THRESHOLD for k, m in self.classifiers.items()}

    def predict_saturation_proba(self, X) -> Dict[str, np.ndarray]:
        Z = self.scaler.transform(self._raw(X))
        return {k: predict_mlp(m, Z) for k, m in self.classifiers.items()}

    def predict_metrics(self, X) -> Dict[str, np.ndarray]:
        """每个受控约束指标的预测值（原始单位）"""
        X = self._raw(X)
        return {k: r.predict(X, self.scaler) for k, r in self.regressors.items()}

    def missing_models(self, saturation_keys: Sequence[str], gated_keys: Sequence[str]) -> List[str]:
        missing = [k for k in saturation_keys if k not in self.classifiers]
        missing += [k for k in gated_keys if k not in self.regressors]
        return missing


# ============================================
# 持久化
# ============================================

def _model_entry(role: str, key: str, kind: str, spec, filename: str,
                 transform: Optional[str] = None, epochs: Optional[int] = None) -> Dict[str, Any]:
    entry = {"role": role, "key": key, "kind": kind, "spec": spec.to_dict(), "file": filename}
    if transform is not None:
        entry["transform"] = transform
    if epochs is not None:
        entry["epochs_trained"] = epochs
    return entry


def save_bundle(bundle: SurrogateBundle, path: str) -> str:
    """
    保存模型包到目录 path（不存在则创建）

    Returns:
        manifest.json 的路径
    """
    models_dir = os.path.join(path, MODELS_DIR)
    os.makedirs(models_dir, exist_ok=True)

    entries = []
    for i, (key, model) in enumerate(bundle.classifiers.items()):
        filename = f"clf_{i:03d}.npz"
        np.savez(os.path.join(models_dir, filename), **mlp_arrays(model))
        entries.append(_model_entry("classifier", key, "mlp", model.spec, filename,
                                    epochs=model.epochs_trained))
    for i, (key, reg) in enumerate(bundle.regressors.items()):
        filename = f"reg_{i:03d}.npz"
        if reg.kind == "rf":
            arrays = forest_arrays(reg.model)
            epochs = None
        else:
            arrays = mlp_arrays(reg.model)
            epochs = reg.model.epochs_trained
        np.savez(os.path.join(models_dir, filename), **arrays)
        entries.append(_model_entry("regressor", key, reg.kind, reg.model.spec, filename,
                                    reg.transform, epochs))

    manifest = {
        "format": BUNDLE_FORMAT,
        "problem": bundle.problem,
        "variables": list(bundle.variables),
        "scaler": bundle.scaler.to_dict(),
        "provenance": {"model_version": MODEL_VERSION, **bundle.provenance},
        "metrics": bundle.metrics,
        "models": entries,
    }
    manifest_path = os.path.join(path, MANIFEST_NAME)
    with open(manifest_path, "w", encoding="utf-8") as f:
        json.dump(manifest, f, ensure_ascii=False, indent=2)
    logger.info(f"模型包已保存: {path} ({len(bundle.classifiers)} 个分类器, "
                f"{len(bundle.regressors)} 个回归模型)")
    return manifest_path


def _load_arrays(path: str) -> Dict[str, np.ndarray]:
    with np.load(path, allow_pickle=False) as data:
        return {k: data[k] for k in data.files}


def _warn_provenance(message: str) -> None:
    logger.warning(message)
    warnings.warn(message, BundleProvenanceWarning, stacklevel=3)


def load_bundle(path: str, dataset=None) -> SurrogateBundle:
    """
    读取模型包

    Args:
        path: save_bundle 写出的目录
        dataset: 可选，给出时核对其哈希与模型包记录的训练数据是否一致

    Raises:
        BundleFormatError: 清单或权重文件缺失、损坏或不一致
    """
    manifest_path = os.path.join(path, MANIFEST_NAME)
    if not os.path.isfile(manifest_path):
        raise BundleFormatError(f"模型包清单不存在: {manifest_path}")
    try:
        with open(manifest_path, "r", encoding="utf-8") as f:
            manifest = json.load(f)
        if manifest.get("format") != BUNDLE_FORMAT:
            raise BundleFormatError(f"不支持的模型包格式: {manifest.get('format')}")
        bundle = SurrogateBundle(
            problem=manifest["problem"],
            variables=tuple(manifest["variables"]),
            scaler=Scaler.from_dict(manifest["scaler"]),
            provenance=dict(manifest.get("provenance", {})),
            metrics=list(manifest.get("metrics", [])),
        )
        for entry in manifest["models"]:
            arrays = _load_arrays(os.path.join(path, MODELS_DIR, entry["file"]))
            if entry["kind"] == "rf":
                model = forest_from_arrays(ForestSpec.from_dict(entry["spec"]), arrays)
            else:
                model = mlp_from_arrays(MlpSpec.from_dict(entry["spec"]), arrays,
                                        entry.get("epochs_trained"))
                if model.n_features != len(bundle.variables):
                    raise BundleFormatError(f"模型 {entry['key']} 的输入维度与变量数不一致")
            if entry["role"] == "classifier":
                bundle.classifiers[entry["key"]] = model
            else:
                bundle.regressors[entry["key"]] = Regressor(entry["kind"], model,
                                                            entry.get("transform", "identity"))
    except BundleFormatError:
        raise
    except (OSError, KeyError, TypeError, ValueError, IndexError, zipfile.BadZipFile) as exc:
        raise BundleFormatError(f"模型包损坏: {path}: {exc}") from exc

    version = bundle.provenance.get("model_version")
    if version != MODEL_VERSION:
        _warn_provenance(f"模型包的器件模型版本 {version} 与当前版本 {MODEL_VERSION} 不一致")
    if dataset is not None:
        recorded = bundle.provenance.get("dataset_hash")
        actual = dataset_hash(dataset)
        if recorded != actual:
            _warn_provenance(f"模型包的训练数据哈希 {recorded} 与给定数据集 {actual} 不一致")
    logger.info(f"模型包已加载: {path}")
    return bundle

