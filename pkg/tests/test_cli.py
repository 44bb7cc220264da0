# Copyright (C) 2023 - 2025 ANSYS, Inc. and/or its affiliates.
# SPDX-License-Identifier: MIT
#
#
# Permission is hereby granted, free of charge, to any person obtaining a copy
# of this software and associated documentation files (the "Software"), to deal
# in the Software without restriction, including without limitation the rights
# to use, copy, modify, merge, publish, distribute, sublicense, and/or sell
# copies of the Software, and to permit persons to whom the Software is
# furnished to do so, subject to the following conditions:
#
# The above copyright notice and this permission notice shall be included in all
# copies or substantial portions of the Software.
#
# THE SOFTWARE IS PROVIDED "AS IS", WITHOUT WARRANTY OF ANY KIND, EXPRESS OR
# IMPLIED, INCLUDING BUT NOT LIMITED TO THE WARRANTIES OF MERCHANTABILITY,
# FITNESS FOR A PARTICULAR PURPOSE AND NONINFRINGEMENT. IN NO EVENT SHALL THE
# AUTHORS OR COPYRIGHT HOLDERS BE LIABLE FOR ANY CLAIM, DAMAGES OR OTHER
# LIABILITY, WHETHER IN AN ACTION OF CONTRACT, TORT OR OTHERWISE, ARISING FROM,
# OUT OF OR IN CONNECTION WITH THE SOFTWARE OR THE USE OR OTHER DEALINGS IN THE
# SOFTWARE.

import io
import json
import logging

from inputs import INPUTS_DIR
import numpy as np
import pytest

from ansys.math.parametrix._cli import (
    EXIT_BOUND_VIOLATED,
    EXIT_CONFIG_ERROR,
    EXIT_NUMERICAL_FAILURE,
    EXIT_OK,
    CsvTable,
    build_parser,
    format_value,
    main,
    merged_config,
    write_csv,
)
from ansys.math.parametrix._logger import configure_console_logging, logger


@pytest.fixture(autouse=True)
def detach_console_handler():
    yield
    for handler in list(logger.handlers):
        if not isinstance(handler, logging.NullHandler):
            logger.removeHandler(handler)
    logger.setLevel(logging.NOTSET)


def _lines(text):
    assert text.endswith("\r\n")
    return text[:-2].split("\r\n")


def _write_json(path, mapping):
    path.write_text(json.dumps({"config_version": 1, **mapping}), encoding="utf-8")
    return str(path)


class TestFormatting:
    @pytest.mark.parametrize(
        "value, text",
        [
            (None, ""),
            (True, "true"),
            (np.bool_(False), "false"),
            (3, "3"),
            (np.int64(4), "4"),
            (0.5, "0.5"),
            (0.1, "0.10000000000000001"),
            (np.float64(1.0), "1"),
            ("lemma", "lemma"),
        ],
    )
    def test_format_value(self, value, text):
        assert format_value(value) == text

    def test_write_csv(self):
        stream = io.StringIO(newline="")
        write_csv(stream, CsvTable(["a", "b"], [["x,y", 1.0]]), "abc")
        assert stream.getvalue() == 'a,b\r\n"x,y",1\r\n# config-hash: abc\r\n'

    def test_row_length(self):
        table = CsvTable(["a", "b"])
        with pytest.raises(ValueError, match="expected 2"):
            table.append([1])
        assert repr(table) == "<CsvTable columns: 2, rows: 0>"


class TestMergedConfig:
    def test_builtin_model(self):
        args = build_parser().parse_args(
            ["density", "--model", "heat", "--param", "d=2", "--x", "0,1"]
        )
        mapping = merged_config(args).to_mapping()
        assert mapping["model"] == {"name": "heat", "params": {"d": 2}}
        assert mapping["density"] == {"x": [0.0, 1.0]}

    def test_pair_flags(self):
        args = build_parser().parse_args(
            ["diff", "--pair", "oscillating", "--eps", "0.5,0.2", "--q", "2.5"]
        )
        mapping = merged_config(args).to_mapping()
        assert mapping["pair"] == {"name": "oscillating_pair", "params": {"q": 2.5, "eps": 0.5}}
        assert mapping["diff"] == {"q": 2.5, "eps": [0.5, 0.2]}

    def test_flags_override_file(self):
        args = build_parser().parse_args(
            [
                "density",
                "--config",
                str(INPUTS_DIR / "heat.toml"),
                "--seed",
                "1",
                "--set",
                "y_count=3",
            ]
        )
        config = merged_config(args)
        assert config.seed == 1
        assert config.command("density")["y_count"] == 3
        assert config.command("density")["order"] == 1

    def test_unknown_command(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args(["plot"])


class TestConsoleLogging:
    def test_info_level(self):
        stream = io.StringIO()
        configure_console_logging(1, stream)
        logger.info("visible")
        logger.debug("hidden")
        assert stream.getvalue() == "INFO ansys.math.parametrix: visible\n"

    def test_handler_is_replaced(self):
        first = configure_console_logging(0, io.StringIO())
        second = configure_console_logging(2, io.StringIO())
        assert first not in logger.handlers
        assert second in logger.handlers
        assert logger.level == logging.DEBUG

    def test_verbose_flag(self, capsys):
        assert main(["check", "--model", "heat", "-v"]) == EXIT_OK
        assert "INFO ansys.math.parametrix: Running 'check'" in capsys.readouterr().err


class TestMain:
    def test_check_heat(self, capsys):
        assert main(["check", "--model", "heat"]) == EXIT_OK
        lines = _lines(capsys.readouterr().out)
        assert lines[0] == "quantity,value,status"
        assert lines[1] == "ellipticity_min,1,pass"
        assert len(lines) == 7
        config = merged_config(build_parser().parse_args(["check", "--model", "heat"]))
        assert lines[-1] == f"# config-hash: {config.config_hash()}"

    def test_check_is_reproducible(self, capsys):
        main(["check", "--model", "ou", "--param", "sigma=0.8"])
        first = capsys.readouterr().out
        main(["check", "--model", "ou", "--param", "sigma=0.8"])
        assert capsys.readouterr().out == first

    def test_failed_check(self, tmp_path, capsys):
        config = _write_json(
            tmp_path / "steep.json", {"model": {"drift": ["3*x1"], "diffusion": [["1"]]}}
        )
        assert main(["check", "--config", config]) == EXIT_BOUND_VIOLATED
        rows = [line.split(",") for line in _lines(capsys.readouterr().out)[1:-1]]
        _, value, status = next(row for row in rows if row[0] == "lipschitz_const_b")
        assert float(value) == pytest.approx(3.0)
        assert status == "fail"

    def test_flow_to_file(self, tmp_path):
        out = tmp_path / "flow.csv"
        code = main(["flow", "--config", str(INPUTS_DIR / "expressions.toml"), "--out", str(out)])
        assert code == EXIT_OK
        lines = _lines(out.read_bytes().decode("utf-8"))
        assert lines[0] == "u,theta_1"
        assert len(lines) == 7
        assert lines[1].startswith("0,")
        assert lines[5].startswith("1,")

    def test_heat_flow_is_constant(self, capsys):
        assert main(["flow", "--model", "heat", "--y", "0.5", "--set", "n_nodes=3"]) == EXIT_OK
        lines = _lines(capsys.readouterr().out)
        assert lines[1:4] == ["0,0.5", "0.5,0.5", "1,0.5"]

    def test_density(self, capsys):
        assert main(["density", "--config", str(INPUTS_DIR / "heat.toml")]) == EXIT_OK
        lines = _lines(capsys.readouterr().out)
        assert lines[0] == "y_1,term_0,term_1,total,tail_bound,exact,rel_error"
        assert len(lines) == 7
        fields = lines[3].split(",")
        assert float(fields[0]) == 0.0
        assert float(fields[1]) == pytest.approx(1.0 / np.sqrt(2.0 * np.pi))
        assert float(fields[2]) == 0.0
        assert float(fields[5]) == pytest.approx(1.0 / np.sqrt(2.0 * np.pi))
        assert float(fields[6]) < 1e-10

    def test_density_relative_error_against_exact(self, capsys):
        argv = ["density", "--model", "ou", "--param", "sigma=0.8", "--t", "0", "--s", "0.5"]
        argv += ["--x", "1", "--order", "4"]
        argv += ["--set", "y_min=0.5", "--set", "y_max=2.5", "--set", "y_count=9"]
        assert main(argv) == EXIT_OK
        lines = _lines(capsys.readouterr().out)
        header = lines[0].split(",")
        assert header[-2:] == ["exact", "rel_error"]
        errors = [float(line.split(",")[-1]) for line in lines[1:-1]]
        assert len(errors) == 9
        assert max(errors) <= 1e-2

    def test_density_without_closed_form(self, tmp_path, capsys):
        config = _write_json(
            tmp_path / "variable.json",
            {
                "model": {
                    "drift": ["-x1"],
                    "diffusion": [["1 + 0.25*sin(x1)"]],
                    "ellipticity_Lambda": 1.8,
                },
                "density": {"order": 0, "y_count": 3},
            },
        )
        assert main(["density", "--config", config]) == EXIT_OK
        assert _lines(capsys.readouterr().out)[0] == "y_1,term_0,total,tail_bound"

    def _pair_config(self, tmp_path):
        return _write_json(
            tmp_path / "pair.json",
            {
                "pair": {"name": "oscillating_pair", "params": {"eps": 1.0, "q": 2.01}},
                "quadrature": {"n_time": 8, "n_space": 11},
            },
        )

    def test_diff(self, tmp_path, capsys):
        config = self._pair_config(tmp_path)
        assert main(["diff", "--config", config, "--order", "1"]) == EXIT_OK
        lines = _lines(capsys.readouterr().out)
        assert lines[0] == "eps,diff_l1,order_0,order_1,bound_strong,bound_weak,fittedC,passed"
        assert len(lines) == 3
        assert lines[1].startswith("1,")
        assert lines[1].endswith(",true")

    def test_bounds(self, tmp_path, capsys):
        config = self._pair_config(tmp_path)
        code = main(["bounds", "--config", config, "--order", "1", "--set", "y_count=3"])
        assert code == EXIT_OK
        lines = _lines(capsys.readouterr().out)
        assert lines[0].startswith("kind,t,s,eps,delta_b,delta_sigma,")
        assert lines[0].endswith(",lemma,n_samples,scaling_exponent")
        assert [line.split(",")[0] for line in lines[1:-1]] == ["l1", "linf"]

    def test_bounds_share_the_calibrated_constant(self, tmp_path, capsys):
        config = self._pair_config(tmp_path)
        argv = ["bounds", "--config", config, "--order", "1", "--eps", "1.0,0.5"]
        main(argv + ["--set", "y_count=3"])
        lines = _lines(capsys.readouterr().out)
        column = lines[0].split(",").index("fittedC")
        rows = [line.split(",") for line in lines[1:-1]]
        assert [row[3] for row in rows] == ["1", "1", "0.5", "0.5"]
        l1_constants = {row[column] for row in rows if row[0] == "l1"}
        linf_constants = {row[column] for row in rows if row[0] == "linf"}
        assert len(l1_constants) == 1
        assert len(linf_constants) == 1

    def test_bounds_violation(self, tmp_path, capsys):
        config = self._pair_config(tmp_path)
        argv = ["bounds", "--config", config, "--order", "1", "--set", "y_count=3"]
        assert main(argv + ["--set", "C=1e-30"]) == EXIT_BOUND_VIOLATED
        lines = _lines(capsys.readouterr().out)
        header = lines[0].split(",")
        l1 = lines[1].split(",")
        assert l1[0] == "l1"
        assert float(l1[header.index("fittedC")]) == 1e-30
        assert l1[header.index("passed")] == "false"
        assert lines[2].split(",")[header.index("passed")] == "true"

    def test_experiment(self, tmp_path):
        out = tmp_path / "experiment"
        code = main(["experiment", "--eps", "1.0", "--dt", "0.5", "--out", str(out)])
        assert code == EXIT_OK
        assert sorted(p.name for p in out.iterdir()) == ["delta_b_eps_1.0.csv", "summary.csv"]
        surface = _lines((out / "delta_b_eps_1.0.csv").read_bytes().decode("utf-8"))
        assert surface[0] == "t,s,delta_b"
        assert len(surface) == 5
        summary = _lines((out / "summary.csv").read_bytes().decode("utf-8"))
        assert summary[0].startswith("eps,dt,cells,max_delta_b")
        assert summary[1].startswith("1,0.5,3,")

    def test_malformed_config(self, capsys):
        assert main(["check", "--config", str(INPUTS_DIR / "malformed.toml")]) == EXIT_CONFIG_ERROR
        assert "parametrix: error:" in capsys.readouterr().err

    def test_missing_model(self, capsys):
        assert main(["check"]) == EXIT_CONFIG_ERROR
        assert "no 'model' table" in capsys.readouterr().err

    def test_bad_param(self, capsys):
        assert main(["check", "--model", "heat", "--param", "d"]) == EXIT_CONFIG_ERROR
        assert "Expected key=value" in capsys.readouterr().err

    def test_numerical_failure(self, tmp_path, capsys):
        config = _write_json(
            tmp_path / "singular.json", {"model": {"drift": ["1/x1"], "diffusion": [["1"]]}}
        )
        assert main(["flow", "--config", config, "--y", "0"]) == EXIT_NUMERICAL_FAILURE
        assert "numerical failure" in capsys.readouterr().err
