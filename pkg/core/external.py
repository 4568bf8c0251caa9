"""
外部仿真器适配

把设计向量填入网表模板，在独立的临时目录中调用仿真器命令，
再解析仿真器写出的指标文件。指标文件每行一条记录：

    metric <name> [context] <value>
    saturation <transistor> [context] <0|1>
"""

from __future__ import annotations

import logging
import math
import os
import re
import shlex
import shutil
import subprocess
import tempfile
from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Set, Tuple

from .circuit import DesignVector, EvaluationResult, metric_key
from .errors import ConfigError, ExternalSimError

logger = logging.getLogger(__name__)

NETLIST_PLACEHOLDER = "{netlist}"
_TEMPLATE_FIELD = re.compile(r"\{\{\s*([A-Za-z_][A-Za-z0-9_]*)\s*\}\}")


@dataclass(frozen=True)
class ExternalSimConfig:
    """
    外部仿真器配置

    command 中的 {netlist} 会被替换为本次调用生成的网表路径，
    命令在该次调用的临时目录中执行。
    """
    command: str
    netlist_template: str
    workdir: Optional[str] = None
    timeout: float = 60.0
    metric_file: str = "metrics.txt"
    netlist_name: str = "circuit.cir"
    keep_workdirs: bool = False
    variables: Tuple[str, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if NETLIST_PLACEHOLDER not in self.command:
            raise ConfigError(f"命令模板必须包含 {NETLIST_PLACEHOLDER} 占位符", "evaluator.external.command")
        if not self.timeout > 0:
            raise ConfigError("超时时间必须为正", "evaluator.external.timeout")
        object.__setattr__(self, "variables", tuple(self.variables))

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ExternalSimConfig":
        try:
            return cls(
                command=data["command"],
                netlist_template=data["netlist_template"],
                workdir=data.get("workdir"),
                timeout=float(data.get("timeout", 60.0)),
                metric_file=data.get("metric_file", "metrics.txt"),
                netlist_name=data.get("netlist_name", "circuit.cir"),
                keep_workdirs=bool(data.get("keep_workdirs", False)),
                variables=tuple(data.get("variables", ())),
            )
        except KeyError as exc:
            raise ConfigError(f"缺少字段 {exc}", "evaluator.external") from exc

    def to_dict(self) -> Dict[str, Any]:
        return {
            "command": self.command,
            "netlist_template": self.netlist_template,
            "workdir": self.workdir,
            "timeout": self.timeout,
            "metric_file": self.metric_file,
            "netlist_name": self.netlist_name,
            "keep_workdirs": self.keep_workdirs,
            "variables": list(self.variables),
        }


def template_fields(template: str) -> Set[str]:
    return set(_TEMPLATE_FIELD.findall(template))


def render_netlist(template: str, values: Dict[str, float]) -> str:
    """用 {{name}} 占位符替换参数值，未知占位符视为配置错误"""
    def substitute(match):
        name = match.group(1)
        if name not in values:
            raise ExternalSimError(f"网表模板中的占位符 {{{{{name}}}}} 没有对应的设计变量")
        return repr(float(values[name]))
    return _TEMPLATE_FIELD.sub(substitute, template)


def read_template(cfg: ExternalSimConfig) -> str:
    if not os.path.isfile(cfg.netlist_template):
        raise ExternalSimError(f"网表模板不存在: {cfg.netlist_template}")
    with open(cfg.netlist_template, "r", encoding="utf-8") as f:
        template = f.read()
    missing = set(cfg.variables) - template_fields(template)
    if missing:
        raise ExternalSimError(f"网表模板缺少设计变量占位符: {', '.join(sorted(missing))}")
    return template


def parse_metric_file(text: str) -> Tuple[Dict[str, float], Dict[str, bool]]:
    """
    解析指标文件，格式错误抛出 ValueError（含行号）
    """
    metrics: Dict[str, float] = {}
    saturation: Dict[str, bool] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        parts = raw.split()
        if not parts:
            continue
        kind = parts[0]
        if kind not in ("metric", "saturation") or len(parts) not in (3, 4):
            raise ValueError(f"第 {lineno} 行无法识别: {raw.strip()}")
        name = parts[1]
        context = parts[2] if len(parts) == 4 else None
        token = parts[-1]
        key = metric_key(name, context)
        if kind == "metric":
            try:
                value = float(token)
            except ValueError:
                raise ValueError(f"第 {lineno} 行的指标值不是数字: {token}") from None
            if not math.isfinite(value):
                raise ValueError(f"第 {lineno} 行的指标值非有限: {token}")
            metrics[key] = value
        else:
            if token not in ("0", "1"):
                raise ValueError(f"第 {lineno} 行的饱和标志必须为 0 或 1: {token}")
            saturation[key] = token == "1"
    return metrics, saturation


def evaluate_external(x: DesignVector, cfg: ExternalSimConfig,
                      template: Optional[str] = None) -> EvaluationResult:
    """
    调用一次外部仿真器

    缺少可执行文件、超时、非零退出、指标文件缺失或格式错误时返回带
    failure 标记的结果，不抛异常。

    Args:
        x: 设计向量，按 cfg.variables 的顺序
        cfg: 仿真器配置
        template: 已读入的网表模板文本，缺省时从 cfg.netlist_template 读取

    Returns:
        EvaluationResult
    """
    if template is None:
        template = read_template(cfg)
    names = cfg.variables or tuple(f"x{i}" for i in range(x.dim))
    if len(names) != x.dim:
        raise ExternalSimError(f"变量名个数 {len(names)} 与设计向量维度 {x.dim} 不一致")
    netlist = render_netlist(template, dict(zip(names, x.values)))

    if cfg.workdir:
        os.makedirs(cfg.workdir, exist_ok=True)
    run_dir = tempfile.mkdtemp(prefix="sizer_", dir=cfg.workdir)
    try:
        netlist_path = os.path.join(run_dir, cfg.netlist_name)
        with open(netlist_path, "w", encoding="utf-8") as f:
            f.write(netlist)
        argv = shlex.split(cfg.command.replace(NETLIST_PLACEHOLDER, shlex.quote(netlist_path)))
        try:
            proc = subprocess.run(argv, cwd=run_dir, capture_output=True, timeout=cfg.timeout)
        except FileNotFoundError as exc:
            return EvaluationResult.failed("missing_binary", f"找不到仿真器: {exc}")
        except subprocess.TimeoutExpired:
            logger.warning(f"仿真超时 ({cfg.timeout} 秒): {run_dir}")
            return EvaluationResult.failed("timeout", f"仿真超过 {cfg.timeout} 秒")
        except OSError as exc:
            return EvaluationResult.failed("missing_binary", f"无法启动仿真器: {exc}")

        if proc.returncode != 0:
            tail = (proc.stderr or b"").decode("utf-8", errors="replace").strip()[-500:]
            return EvaluationResult.failed("simulator_error", f"退出码 {proc.returncode}: {tail}")

        metric_path = os.path.join(run_dir, cfg.metric_file)
        if not os.path.isfile(metric_path):
            return EvaluationResult.failed("parse_error", f"仿真器没有生成指标文件 {cfg.metric_file}")
        with open(metric_path, "rb") as f:
            raw = f.read()
        try:
            metrics, saturation = parse_metric_file(raw.decode("utf-8"))
        except UnicodeDecodeError as exc:
            return EvaluationResult.failed("parse_error", f"指标文件不是 UTF-8 文本: {exc}")
        except ValueError as exc:
            return EvaluationResult.failed("parse_error", str(exc))
        return EvaluationResult(metrics=metrics, saturation=saturation)
    finally:
        if not cfg.keep_workdirs:
            shutil.rmtree(run_dir, ignore_errors=True)
