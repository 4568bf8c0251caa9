"""命令行入口测试"""

import json

import pytest

from cli.sizer import EXIT_CONFIG, EXIT_OK, EXIT_RUNTIME, cli_main


@pytest.fixture
def config_file(tmp_path):
    def factory(**data):
        data.setdefault("problem", "synthetic")
        data.setdefault("modes", ["SGA", "MGA"])
        data.setdefault("runs", 1)
        data.setdefault("ga", {"population": 8, "gen_max": 5})
        path = tmp_path / "experiment.json"
        path.write_text(json.dumps(data), encoding="utf-8")
        return str(path)
    return factory


class TestArguments:

    def test_help(self, capsys):
        assert cli_main(["--help"]) == EXIT_OK
        assert "compare" in capsys.readouterr().out

    def test_unknown_subcommand(self):
        assert cli_main(["tune"]) == EXIT_CONFIG

    def test_missing_config(self, capsys):
        assert cli_main(["optimize"]) == EXIT_CONFIG
        assert "--config" in capsys.readouterr().err

    def test_bad_config_field(self, config_file, capsys):
        path = config_file(ga={"pop": 3})
        assert cli_main(["compare", "--config", path]) == EXIT_CONFIG
        assert "ga.pop" in capsys.readouterr().err

    def test_config_not_found(self, tmp_path):
        assert cli_main(["sample", "--config", str(tmp_path / "none.json")]) == EXIT_CONFIG


class TestCommands:

    def test_optimize(self, config_file, tmp_path, capsys):
        out = tmp_path / "out"
        code = cli_main(["optimize", "--config", config_file(), "--mode", "MGA", "--out", str(out)])
        assert code == EXIT_OK
        printed = capsys.readouterr().out
        assert "[MGA]" in printed and "x1" in printed
        assert (out / "traces" / "MGA_0.csv").is_file()

    def test_compare_then_report(self, config_file, tmp_path, capsys):
        out = tmp_path / "out"
        assert cli_main(["compare", "--config", config_file(), "--out", str(out), "--seed", "3"]) == EXIT_OK
        printed = capsys.readouterr().out
        assert "MGA_vs_SGA" in printed
        with open(out / "summary.json", encoding="utf-8") as f:
            assert json.load(f)["master_seed"] == 3

        (out / "convergence.csv").unlink()
        assert cli_main(["report", "--out", str(out)]) == EXIT_OK
        assert (out / "convergence.csv").is_file()

    def test_sample(self, config_file, tmp_path, capsys):
        out = tmp_path / "out"
        assert cli_main(["sample", "--config", config_file(database_size=30), "--out", str(out)]) == EXIT_OK
        assert "30 行" in capsys.readouterr().out
        assert (out / "dataset.csv").is_file()

    def test_train(self, config_file, tmp_path, capsys):
        out = tmp_path / "out"
        path = config_file(modes=["MGA_MLSCP"], database_size=60,
                           training={"classifier": {"hidden_layers": [4], "max_epochs": 5},
                                     "regressor": {"hidden_layers": [4], "max_epochs": 5}})
        assert cli_main(["train", "--config", path, "--out", str(out)]) == EXIT_OK
        assert "xsum" in capsys.readouterr().out
        assert (out / "bundle" / "manifest.json").is_file()

    def test_report_without_traces(self, tmp_path):
        assert cli_main(["report", "--out", str(tmp_path)]) == EXIT_CONFIG

    def test_runtime_error(self, config_file, tmp_path):
        path = config_file(modes=["SGA"], evaluator={
            "kind": "external",
            "external": {"command": "sim {netlist}", "netlist_template": str(tmp_path / "missing.cir")},
        })
        assert cli_main(["optimize", "--config", path, "--out", str(tmp_path / "out")]) == EXIT_RUNTIME
