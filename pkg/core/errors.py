"""异常类型定义。"""

from __future__ import annotations

from typing import Optional


class SizerError(Exception):
    """尺寸优化工具的基础异常。"""


class ConfigError(SizerError, ValueError):
    """配置校验失败，field 为出错字段的点分路径。"""

    def __init__(self, message: str, field: Optional[str] = None):
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)


class DomainError(SizerError, ValueError):
    """公式输入超出定义域。"""


class DatasetError(SizerError):
    """数据集读写或构建错误。"""


class DatabaseBuildError(DatasetError):
    """训练数据库评估某个样本点时出错，index 为样本序号。"""

    def __init__(self, message: str, index: int):
        self.index = index
        super().__init__(message)


class BundleFormatError(SizerError):
    """模型包文件损坏或格式不符。"""


class ExternalSimError(SizerError):
    """外部仿真器配置错误。"""


class TrainingError(SizerError):
    """代理模型训练失败。"""


class BundleProvenanceWarning(UserWarning):
    """模型包记录的数据集哈希或模型版本与当前不一致。"""
