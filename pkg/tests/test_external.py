"""
外部仿真器适配测试

用当前解释器运行的桩脚本充当仿真器：读网表中的参数，写出指标文件。
"""

import os
import shlex
import sys
import textwrap

import pytest

from core.circuit import DesignVector, check_constraints
from core.errors import ConfigError, ExternalSimError
from core.evaluator import ExternalEvaluator, make_evaluator
from core.external import (
    ExternalSimConfig, evaluate_external, parse_metric_file, render_netlist, template_fields,
)

TEMPLATE = "* 合成基准\n.param x1={{x1}} x2={{ x2 }}\n.end\n"

PASS_STUB = """
import re, sys
text = open(sys.argv[1]).read()
values = dict(re.findall(r"(x[12])=([-+0-9.eE]+)", text))
x1, x2 = float(values["x1"]), float(values["x2"])
with open("metrics.txt", "w") as f:
    f.write(f"metric sumsq {x1 * x1 + x2 * x2!r}\\n")
    f.write(f"metric xsum {x1 + x2!r}\\n")
    f.write("saturation M1 1\\n")
"""

SATURATION_STUB = """
with open("metrics.txt", "w") as f:
    f.write("metric sumsq 0.5\\nmetric xsum 1.0\\nsaturation M1 0\\n")
"""

SLEEP_STUB = """
import time
time.sleep(10)
"""

EXIT_STUB = """
import sys
sys.stderr.write("convergence failure\\n")
sys.exit(3)
"""

SILENT_STUB = "pass\n"

GARBAGE_STUB = """
with open("metrics.txt", "w") as f:
    f.write("metric sumsq not-a-number\\n")
"""

BINARY_METRIC_STUB = """
with open("metrics.txt", "wb") as f:
    f.write(b"metric sumsq 0.5\\n\\xff\\xfe junk\\n")
"""

BINARY_STDERR_STUB = """
import sys
sys.stderr.buffer.write(b"\\xff\\xfe latin-1 warning\\n")
with open("metrics.txt", "w") as f:
    f.write("metric sumsq 0.5\\nmetric xsum 1.0\\nsaturation M1 1\\n")
"""

BINARY_EXIT_STUB = """
import sys
sys.stderr.buffer.write(b"\\xff singular matrix\\n")
sys.exit(4)
"""


@pytest.fixture
def template_path(tmp_path):
    path = tmp_path / "synthetic.cir.tmpl"
    path.write_text(TEMPLATE, encoding="utf-8")
    return str(path)


@pytest.fixture
def make_cfg(tmp_path, template_path):
    def factory(stub_source, **kwargs):
        stub = tmp_path / f"stub_{abs(hash(stub_source))}.py"
        stub.write_text(textwrap.dedent(stub_source), encoding="utf-8")
        command = f"{shlex.quote(sys.executable)} {shlex.quote(str(stub))} {{netlist}}"
        kwargs.setdefault("workdir", str(tmp_path / "runs"))
        kwargs.setdefault("variables", ("x1", "x2"))
        return ExternalSimConfig(command=command, netlist_template=template_path, **kwargs)
    return factory


# ============================================
# 仿真器调用
# ============================================

class TestEvaluateExternal:

    def test_pass(self, make_cfg):
        r = evaluate_external(DesignVector([0.25, 0.75]), make_cfg(PASS_STUB))
        assert r.failure is None
        assert r.metrics["sumsq"] == pytest.approx(0.625)
        assert r.metrics["xsum"] == pytest.approx(1.0)
        assert r.saturation == {"M1": True}

    def test_saturation_flag_zero(self, make_cfg, synthetic):
        x = DesignVector([0.5, 0.5])
        r = evaluate_external(x, make_cfg(SATURATION_STUB))
        assert r.failure is None
        assert r.saturation == {"M1": False}
        report = check_constraints(r, synthetic, x)
        assert report.constraints_passed and not report.overall

    def test_timeout(self, make_cfg):
        r = evaluate_external(DesignVector([0.5, 0.5]), make_cfg(SLEEP_STUB, timeout=0.5))
        assert r.failure == "timeout"

    def test_nonzero_exit(self, make_cfg):
        r = evaluate_external(DesignVector([0.5, 0.5]), make_cfg(EXIT_STUB))
        assert r.failure == "simulator_error"
        assert "3" in r.message and "convergence failure" in r.message

    def test_missing_metric_file(self, make_cfg):
        r = evaluate_external(DesignVector([0.5, 0.5]), make_cfg(SILENT_STUB))
        assert r.failure == "parse_error"

    def test_bad_metric_value(self, make_cfg):
        r = evaluate_external(DesignVector([0.5, 0.5]), make_cfg(GARBAGE_STUB))
        assert r.failure == "parse_error"
        assert "第 1 行" in r.message

    def test_metric_file_not_utf8(self, make_cfg):
        r = evaluate_external(DesignVector([0.5, 0.5]), make_cfg(BINARY_METRIC_STUB))
        assert r.failure == "parse_error"

    def test_binary_stderr_on_success(self, make_cfg):
        r = evaluate_external(DesignVector([0.5, 0.5]), make_cfg(BINARY_STDERR_STUB))
        assert r.failure is None
        assert r.metrics["sumsq"] == pytest.approx(0.5)

    def test_binary_stderr_on_failure(self, make_cfg):
        r = evaluate_external(DesignVector([0.5, 0.5]), make_cfg(BINARY_EXIT_STUB))
        assert r.failure == "simulator_error"
        assert "singular matrix" in r.message

    def test_missing_binary(self, template_path, tmp_path):
        cfg = ExternalSimConfig(command="no-such-simulator-binary {netlist}",
                                netlist_template=template_path, variables=("x1", "x2"),
                                workdir=str(tmp_path / "runs"))
        assert evaluate_external(DesignVector([0.5, 0.5]), cfg).failure == "missing_binary"

    def test_workdirs_removed(self, make_cfg, tmp_path):
        cfg = make_cfg(PASS_STUB)
        evaluate_external(DesignVector([0.5, 0.5]), cfg)
        assert os.listdir(cfg.workdir) == []

    def test_workdirs_kept(self, make_cfg):
        cfg = make_cfg(PASS_STUB, keep_workdirs=True)
        evaluate_external(DesignVector([0.5, 0.5]), cfg)
        runs = os.listdir(cfg.workdir)
        assert len(runs) == 1
        netlist = os.path.join(cfg.workdir, runs[0], cfg.netlist_name)
        with open(netlist, encoding="utf-8") as f:
            assert ".param x1=0.5 x2=0.5" in f.read()

    def test_dimension_mismatch(self, make_cfg):
        with pytest.raises(ExternalSimError):
            evaluate_external(DesignVector([0.5, 0.5, 0.5]), make_cfg(PASS_STUB))


class TestExternalEvaluator:

    def test_factory_fills_variable_names(self, make_cfg, synthetic):
        cfg = make_cfg(PASS_STUB, variables=())
        e = make_evaluator(synthetic, "external", cfg)
        assert isinstance(e, ExternalEvaluator)
        x = DesignVector([0.3, 0.8])
        r = e.evaluate(x)
        assert e.call_count() == 1
        assert check_constraints(r, synthetic, x).overall

    def test_template_missing_placeholder(self, make_cfg):
        cfg = make_cfg(PASS_STUB, variables=("x1", "x2", "x3"))
        with pytest.raises(ExternalSimError):
            ExternalEvaluator(cfg)

    def test_template_must_exist(self, tmp_path):
        cfg = ExternalSimConfig(command="sim {netlist}", netlist_template=str(tmp_path / "none.cir"))
        with pytest.raises(ExternalSimError):
            ExternalEvaluator(cfg)


# ============================================
# 配置与解析
# ============================================

class TestConfigAndParsing:

    def test_command_needs_placeholder(self, template_path):
        with pytest.raises(ConfigError):
            ExternalSimConfig(command="ngspice -b", netlist_template=template_path)

    def test_timeout_positive(self, template_path):
        with pytest.raises(ConfigError):
            ExternalSimConfig(command="sim {netlist}", netlist_template=template_path, timeout=0)

    def test_dict_round_trip(self, template_path):
        cfg = ExternalSimConfig(command="sim {netlist}", netlist_template=template_path,
                                timeout=5.0, variables=("a", "b"))
        assert ExternalSimConfig.from_dict(cfg.to_dict()) == cfg

    def test_from_dict_missing_field(self):
        with pytest.raises(ConfigError):
            ExternalSimConfig.from_dict({"command": "sim {netlist}"})

    def test_template_fields(self):
        assert template_fields(TEMPLATE) == {"x1", "x2"}

    def test_render_unknown_placeholder(self):
        with pytest.raises(ExternalSimError):
            render_netlist("{{x9}}", {"x1": 1.0})

    def test_parse_contexts(self):
        metrics, saturation = parse_metric_file(
            "metric gain icmr_min 21.5\n\nmetric power 1e-4\nsaturation M1 icmr_max 1\n")
        assert metrics == {"gain@icmr_min": 21.5, "power": 1e-4}
        assert saturation == {"M1@icmr_max": True}

    @pytest.mark.parametrize("text", [
        "result gain 1.0",
        "metric gain",
        "saturation M1 yes",
        "metric gain nan",
        "metric a b c d",
    ])
    def test_parse_errors(self, text):
        with pytest.raises(ValueError):
            parse_metric_file(text)
