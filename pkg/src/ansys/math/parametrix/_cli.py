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

"""Command-line driver writing reproducible CSV artifacts."""

import argparse
import csv
import math
from pathlib import Path
import sys
from typing import Any, Dict, List, Optional, Sequence, TextIO

import numpy as np

from ._assumptions import check_assumptions
from ._config import RunConfig
from ._exceptions import NumericalError, ParametrixError
from ._flow import flow_path
from ._logger import configure_console_logging, logger
from ._oracle import exact_linear_density
from ._parametrix import QuadConfig, series_density_grid
from ._perturbation import (
    CSV_FIELDS,
    LEMMAS,
    PerturbationPair,
    PerturbationReport,
    calibrate_constant,
    density_diff_terms,
    fit_holder_constant,
    l1_theorem_bound,
    l1_theorem_check,
    linf_theorem_check,
    maxima,
    nonuniform_lower_bound,
    oscillating_rate_exponent,
    oscillation_tail_integral,
    random_samples,
    uniform_time_grid,
    verify_lemma,
)

EXIT_OK = 0
EXIT_BOUND_VIOLATED = 1
EXIT_CONFIG_ERROR = 2
EXIT_NUMERICAL_FAILURE = 3

PAIR_ALIASES = {"oscillating": "oscillating_pair"}
DEFAULT_FLOW_NODES = 11
DEFAULT_Y_RANGE = (-3.0, 3.0)
DEFAULT_Y_COUNT = 61
DEFAULT_DENSITY_ORDER = 4
DEFAULT_DIFF_ORDER = 3
DEFAULT_EPS_SWEEP = (1.0, 0.5, 0.2, 0.05)
DEFAULT_EXPERIMENT_EPS = (1.0, 0.5, 0.2, 0.05, 0.01, 0.0025)
DEFAULT_EXPERIMENT_Q = 2.01
FINE_GRID_EPS = 0.0025
DEFAULT_LINF_Y_COUNT = 21
DEFAULT_LEMMA_SAMPLES = 20
SUMMARY_FILE = "summary.csv"

Row = Sequence[Any]


class CsvTable:
    """Header and rows of one CSV artifact."""

    def __init__(self, header: Sequence[str], rows: Optional[List[Row]] = None):
        self._header = list(header)
        self._rows: List[Row] = list(rows or [])

    @property
    def header(self) -> List[str]:
        return list(self._header)

    @property
    def rows(self) -> List[Row]:
        return list(self._rows)

    def append(self, row: Row) -> None:
        if len(row) != len(self._header):
            raise ValueError(f"Row has {len(row)} fields, expected {len(self._header)}.")
        self._rows.append(row)

    def __repr__(self) -> str:
        """Printable representation of the object."""
        return f"<{self.__class__.__name__} columns: {len(self._header)}, rows: {len(self._rows)}>"


class CommandOutput:
    """Artifacts of one command and whether every check passed."""

    def __init__(self, tables: Dict[Optional[str], CsvTable], passed: bool = True):
        self.tables = tables
        self.passed = passed


def format_value(value: Any) -> str:
    """Text of a CSV field. Floats use 17 significant digits, booleans are lowercase."""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def write_csv(stream: TextIO, table: CsvTable, config_hash: str) -> None:
    """Write a table with RFC 4180 quoting and a trailing ``# config-hash`` line."""
    writer = csv.writer(stream, lineterminator="\r\n")
    writer.writerow(table.header)
    for row in table.rows:
        writer.writerow([format_value(value) for value in row])
    stream.write(f"# config-hash: {config_hash}\r\n")


def _floats(values: Any, name: str) -> List[float]:
    if isinstance(values, (int, float)):
        return [float(values)]
    try:
        return [float(v) for v in values]
    except (TypeError, ValueError) as e:
        raise ParametrixError(
            f"'{name}' must be a number or a list of numbers, got {values!r}."
        ) from e


def _point(values: Any, d: int, name: str) -> np.ndarray:
    point = np.array(_floats(values, name))
    if point.size == 1 and d > 1:
        point = np.full(d, point[0])
    if point.size != d:
        raise ParametrixError(f"'{name}' must have {d} coordinates, got {point.size}.")
    return point


def _y_grid(params: Dict[str, Any], d: int) -> np.ndarray:
    low = float(params.get("y_min", DEFAULT_Y_RANGE[0]))
    high = float(params.get("y_max", DEFAULT_Y_RANGE[1]))
    count = int(params.get("y_count", DEFAULT_Y_COUNT))
    axis = np.linspace(low, high, count)
    mesh = np.meshgrid(*([axis] * d), indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def _coordinates(prefix: str, d: int) -> List[str]:
    return [f"{prefix}_{i}" for i in range(1, d + 1)]


def cmd_check(config: RunConfig) -> CommandOutput:
    """Assumption audit of the model, or of the pair when one is configured."""
    audited: Any = config.pair_models() if config.has_pair() else config.model()
    report = check_assumptions(audited, threads=config.threads)
    table = CsvTable(["quantity", "value", "status"], [list(row) for row in report.as_rows()])
    return CommandOutput({None: table}, report.all_passed)


def cmd_flow(config: RunConfig) -> CommandOutput:
    """Flow ending at ``(s, y)`` sampled at uniform times of ``[t, s]``."""
    spec = config.model()
    params = config.command("flow")
    t = float(params.get("t", 0.0))
    s = float(params.get("s", spec.horizon_T))
    y = _point(params.get("y", 0.0), spec.d, "y")
    nodes = np.linspace(t, s, int(params.get("n_nodes", DEFAULT_FLOW_NODES)))
    path = flow_path(spec, t, s, y, nodes)
    table = CsvTable(["u"] + _coordinates("theta", spec.d))
    for u, value in zip(path.nodes, path.values):
        table.append([u, *value])
    return CommandOutput({None: table})


def cmd_density(config: RunConfig) -> CommandOutput:
    """
    Truncated series terms, total and tail bound on a grid of terminal points.

    For a linear model with constant diffusion the closed-form density and the relative error
    of the total are appended.
    """
    spec = config.model()
    params = config.command("density")
    t = float(params.get("t", 0.0))
    s = float(params.get("s", spec.horizon_T))
    x = _point(params.get("x", 0.0), spec.d, "x")
    order = int(params.get("order", DEFAULT_DENSITY_ORDER))
    ys = _y_grid(params, spec.d)
    approximations = series_density_grid(spec, t, s, x, ys, order, config.quad())
    header = (
        _coordinates("y", spec.d)
        + [f"term_{r}" for r in range(order + 1)]
        + ["total", "tail_bound"]
    )
    if not spec.is_linear:
        table = CsvTable(header)
        for y, approx in zip(ys, approximations):
            table.append([*y, *approx.terms, approx.total, approx.tail_bound])
        return CommandOutput({None: table})
    sigma = spec.sigma(t, np.zeros(spec.d))
    exact = np.atleast_1d(exact_linear_density(spec.drift_matrix, sigma, t, s, x, ys))
    table = CsvTable(header + ["exact", "rel_error"])
    for y, approx, value in zip(ys, approximations, exact):
        error = abs(approx.total - value) / value if value > 0.0 else math.inf
        table.append([*y, *approx.terms, approx.total, approx.tail_bound, value, error])
    return CommandOutput({None: table})


def _eps_list(config: RunConfig, params: Dict[str, Any], default: Sequence[float]) -> List[float]:
    if "eps" in params:
        return _floats(params["eps"], "eps")
    pair_table = config.to_mapping().get("pair", {})
    if "eps" in pair_table.get("params", {}) and "name" in pair_table:
        return [float(pair_table["params"]["eps"])]
    return list(default)


def _pairs(config: RunConfig, eps_values: Sequence[float]) -> List[PerturbationPair]:
    if "name" in config.to_mapping().get("pair", {}):
        return [config.pair(eps) for eps in eps_values]
    return [config.pair()]


def cmd_diff(config: RunConfig) -> CommandOutput:
    """Integral density difference and integral stability bound per ``eps``."""
    params = config.command("diff")
    t = float(params.get("t", 0.0))
    s = float(params.get("s", 1.0))
    order = int(params.get("order", DEFAULT_DIFF_ORDER))
    quad = config.quad()
    pairs = _pairs(config, _eps_list(config, params, DEFAULT_EPS_SWEEP))
    results = []
    for pair in pairs:
        difference = density_diff_terms(pair, t, s, order, quad)
        grid = uniform_time_grid(t, s, (s - t) / 10)
        unit = l1_theorem_bound(pair, t, s, 1.0, maxima(pair, grid, quad, config.threads))
        results.append((pair, difference, unit))
    constant = calibrate_constant([r[1].total for r in results], [r[2].strong for r in results])
    table = CsvTable(
        ["eps", "diff_l1"]
        + [f"order_{n}" for n in range(order + 1)]
        + ["bound_strong", "bound_weak", "fittedC", "passed"]
    )
    passed = True
    for pair, difference, unit in results:
        holds = difference.total <= constant * unit.strong * (1.0 + 1e-12)
        passed = passed and holds
        table.append(
            [
                pair.epsilon,
                difference.total,
                *difference.per_order,
                constant * unit.strong,
                constant * unit.weak,
                constant,
                holds,
            ]
        )
    return CommandOutput({None: table}, passed)


def _linf_grid(pair: PerturbationPair, params: Dict[str, Any]) -> np.ndarray:
    d = pair.base.d
    ys = _y_grid({**params, "y_count": params.get("y_count", DEFAULT_LINF_Y_COUNT)}, d)
    rows = [np.concatenate([np.broadcast_to(x, ys.shape), ys], axis=-1) for x, _ in pair.mu]
    return np.concatenate(rows)


def _theorem_checks(
    config: RunConfig,
    pair: PerturbationPair,
    params: Dict[str, Any],
    order: int,
    quad: QuadConfig,
    constants: Dict[str, Optional[float]],
) -> List[PerturbationReport]:
    t = float(params.get("t", 0.0))
    s = float(params.get("s", 1.0))
    l1 = l1_theorem_check(
        pair, t, s, order, quad, fitted_C=constants["l1"], threads=config.threads
    )
    linf = linf_theorem_check(
        pair, t, s, _linf_grid(pair, params), N=order, quad=quad, fitted_C=constants["linf"]
    )
    return [l1, linf]


def cmd_bounds(config: RunConfig) -> CommandOutput:
    """
    Integral and uniform stability checks per ``eps``, plus optional lemma verifications.

    The constants ``C`` (integral) and ``linf_C`` (uniform) come from the ``bounds`` table when
    set, otherwise from the pair with the largest ``eps``. Every other pair is checked against
    them.
    """
    params = config.command("bounds")
    t = float(params.get("t", 0.0))
    s = float(params.get("s", 1.0))
    order = int(params.get("order", DEFAULT_DIFF_ORDER))
    lemmas = list(params.get("lemmas", []))
    unknown = set(lemmas) - set(LEMMAS)
    if unknown:
        raise ParametrixError(f"Unknown lemmas: {', '.join(sorted(unknown))}.")
    quad = config.quad()
    pairs = _pairs(config, _eps_list(config, params, DEFAULT_EPS_SWEEP))
    constants: Dict[str, Optional[float]] = {
        "l1": None if params.get("C") is None else float(params["C"]),
        "linf": None if params.get("linf_C") is None else float(params["linf_C"]),
    }
    checked: Dict[int, List[PerturbationReport]] = {}
    if None in constants.values():
        reference = max(range(len(pairs)), key=lambda i: pairs[i].epsilon)
        checked[reference] = _theorem_checks(
            config, pairs[reference], params, order, quad, constants
        )
        for report in checked[reference]:
            constants[report.kind] = report.fitted_constants["C"]
        logger.info(f"Calibrated bound constants {constants} at eps={pairs[reference].epsilon}")
    table = CsvTable(["kind", *CSV_FIELDS, "lemma", "n_samples", "scaling_exponent"])
    passed = True
    for index, pair in enumerate(pairs):
        reports = checked.get(index) or _theorem_checks(
            config, pair, params, order, quad, constants
        )
        for report in reports:
            passed = passed and report.passed
            row = report.as_row()
            table.append([report.kind, *(row[field] for field in CSV_FIELDS), None, None, None])
        n_samples = int(params.get("n_samples", DEFAULT_LEMMA_SAMPLES))
        samples = random_samples(pair, n_samples, config.seed)
        for lemma in lemmas:
            result = verify_lemma(lemma, pair, samples, quad)
            passed = passed and result.finite
            fields = {
                "t": t,
                "s": s,
                "eps": pair.epsilon,
                "fittedC": result.fitted_C,
                "passed": result.finite,
            }
            table.append(
                [
                    "lemma",
                    *(fields.get(field) for field in CSV_FIELDS),
                    lemma,
                    result.n_samples,
                    result.scaling_exponent,
                ]
            )
    return CommandOutput({None: table}, passed)


def _experiment_dt(params: Dict[str, Any], eps: float) -> float:
    if "dt" in params:
        return float(params["dt"])
    return 0.05 if eps <= FINE_GRID_EPS else 0.1


def cmd_experiment(config: RunConfig) -> CommandOutput:
    """
    Drift perturbation surfaces of the oscillating experiment.

    Writes one ``delta_b_eps_<eps>.csv`` file per ``eps`` with the cells ``(t, s)`` of the time
    grid and a ``summary.csv`` with the maxima and the closed-form bound columns.
    """
    params = config.command("experiment")
    q = float(params.get("q", DEFAULT_EXPERIMENT_Q))
    sigma = float(params.get("sigma", 1.0))
    mu_point = _floats(params.get("mu", 1.0), "mu")
    eps_values = _floats(params.get("eps", list(DEFAULT_EXPERIMENT_EPS)), "eps")
    rate = oscillating_rate_exponent(q)
    quad = config.quad()
    tables: Dict[Optional[str], CsvTable] = {}
    summary = CsvTable(
        [
            "eps",
            "dt",
            "cells",
            "max_delta_b",
            "argmax_t",
            "argmax_s",
            "diag_argmax_t",
            "fitted_M",
            "rate_exponent",
            "tail_integral",
            "nonuniform_lower_bound",
        ]
    )
    for eps in eps_values:
        pair = config.with_overrides(
            "pair",
            name="oscillating_pair",
            params={"eps": eps, "q": q, "sigma": sigma},
            mu=[{"point": mu_point, "weight": 1.0}],
        ).pair()
        dt = _experiment_dt(params, eps)
        cells = uniform_time_grid(0.0, pair.horizon_T, dt)
        found = maxima(pair, cells, quad, config.threads)
        surface = {cell: value[0] for cell, value in sorted(found.deltas.items())}
        rows = [[t, s, value] for (t, s), value in surface.items()]
        tables[f"delta_b_eps_{eps!r}.csv"] = CsvTable(["t", "s", "delta_b"], rows)
        peak = max(surface, key=lambda cell: (surface[cell], -cell[0], -cell[1]))
        diagonal = {
            cell: value for cell, value in surface.items() if math.isclose(cell[1] - cell[0], dt)
        }
        diagonal_peak = max(diagonal, key=lambda cell: (diagonal[cell], -cell[0]))
        summary.append(
            [
                eps,
                dt,
                len(surface),
                surface[peak],
                peak[0],
                peak[1],
                diagonal_peak[0],
                fit_holder_constant(surface, eps, q),
                rate,
                oscillation_tail_integral(eps),
                nonuniform_lower_bound(q),
            ]
        )
    tables[SUMMARY_FILE] = summary
    return CommandOutput(tables)


_COMMANDS = {
    "check": cmd_check,
    "flow": cmd_flow,
    "density": cmd_density,
    "diff": cmd_diff,
    "bounds": cmd_bounds,
    "experiment": cmd_experiment,
}


def _parse_value(text: str) -> Any:
    for kind in (int, float):
        try:
            return kind(text)
        except ValueError:
            pass
    return text


def _key_values(items: Optional[Sequence[str]]) -> Dict[str, Any]:
    values: Dict[str, Any] = {}
    for item in items or []:
        key, separator, value = item.partition("=")
        if not separator:
            raise ParametrixError(f"Expected key=value, got '{item}'.")
        values[key.strip()] = _parse_value(value.strip())
    return values


def _number_list(text: str) -> List[float]:
    return [float(part) for part in text.split(",") if part.strip()]


def build_parser() -> argparse.ArgumentParser:
    """Argument parser of the ``parametrix`` command."""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="TOML or JSON run configuration.")
    common.add_argument("--seed", type=int, help="Seed of every random stream.")
    common.add_argument("--out", help="Output file, or output directory for 'experiment'.")
    common.add_argument("--threads", type=int, help="Worker threads.")
    common.add_argument(
        "-v", "--verbose", action="count", default=0, help="-v for info, -vv for debug."
    )
    common.add_argument("--model", help="Built-in model name.")
    common.add_argument(
        "--param", action="append", metavar="KEY=VALUE", help="Built-in model parameter."
    )
    common.add_argument("--pair", help="Built-in pair name, for example 'oscillating'.")
    common.add_argument(
        "--eps", type=_number_list, help="Perturbation size, or comma-separated list."
    )
    common.add_argument("--q", type=float, help="Exponent of the oscillating perturbation.")
    common.add_argument("--sigma", type=float, help="Diffusion level of the oscillating pair.")
    common.add_argument("--t", type=float, help="Start time.")
    common.add_argument("--s", type=float, help="Terminal time.")
    common.add_argument("--order", type=int, help="Truncation order of the series.")
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="Command parameter.")

    parser = argparse.ArgumentParser(
        prog="parametrix", description="Parametrix transition densities and stability bounds."
    )
    commands = parser.add_subparsers(dest="command", required=True)
    commands.add_parser("check", parents=[common], help="Audit the model assumptions.")
    flow = commands.add_parser("flow", parents=[common], help="Sample a deterministic flow.")
    flow.add_argument("--y", type=_number_list, help="Terminal point.")
    density = commands.add_parser(
        "density", parents=[common], help="Evaluate the parametrix series."
    )
    density.add_argument("--x", type=_number_list, help="Starting point.")
    commands.add_parser("diff", parents=[common], help="Integral density differences.")
    bounds = commands.add_parser("bounds", parents=[common], help="Stability bound checks.")
    bounds.add_argument("--lemma", action="append", choices=LEMMAS, help="Lemma to verify.")
    experiment = commands.add_parser(
        "experiment", parents=[common], help="Oscillating drift experiment."
    )
    experiment.add_argument("--dt", type=float, help="Time step of the grid.")
    experiment.add_argument("--mu", type=_number_list, help="Point of the starting Dirac mass.")
    return parser


def merged_config(args: argparse.Namespace) -> RunConfig:
    """Configuration file merged with the command-line flags."""
    config = RunConfig.load(args.config) if args.config else RunConfig.default()
    config = config.with_overrides(seed=args.seed, threads=args.threads, output=args.out)
    model_params = _key_values(args.param)
    if args.model:
        config = config.with_overrides("model", name=args.model, params=model_params)
    if args.pair:
        pair_params = dict(model_params)
        for key in ("q", "sigma"):
            if getattr(args, key) is not None:
                pair_params[key] = getattr(args, key)
        if args.eps:
            pair_params["eps"] = args.eps[0]
        name = PAIR_ALIASES.get(args.pair, args.pair)
        config = config.with_overrides("pair", name=name, params=pair_params)
    command: Dict[str, Any] = _key_values(args.set)
    for key in ("t", "s", "order", "q", "sigma"):
        value = getattr(args, key)
        if value is not None:
            command[key] = value
    if args.eps is not None:
        command["eps"] = args.eps
    for key, name in (("y", "y"), ("x", "x"), ("dt", "dt"), ("mu", "mu"), ("lemma", "lemmas")):
        value = getattr(args, key, None)
        if value is not None:
            command[name] = value
    return config.with_overrides(args.command, **command)


def _emit(output: CommandOutput, command: str, config: RunConfig) -> None:
    config_hash = config.config_hash()
    if command == "experiment":
        directory = Path(config.output or "experiment_output")
        directory.mkdir(parents=True, exist_ok=True)
        for name, table in output.tables.items():
            with open(directory / str(name), "w", encoding="utf-8", newline="") as stream:
                write_csv(stream, table, config_hash)
        return
    table = output.tables[None]
    if config.output is None:
        write_csv(sys.stdout, table, config_hash)
        return
    with open(config.output, "w", encoding="utf-8", newline="") as stream:
        write_csv(stream, table, config_hash)


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Entry point of the ``parametrix`` command.

    Returns
    -------
    int
        0 on success, 1 if a bound or assumption check failed, 2 on a configuration or input
        error and 3 on a numerical failure.
    """
    args = build_parser().parse_args(argv)
    configure_console_logging(args.verbose)
    try:
        config = merged_config(args)
        logger.info(f"Running '{args.command}' with configuration {config.config_hash()}")
        output = _COMMANDS[args.command](config)
        _emit(output, args.command, config)
    except NumericalError as e:
        print(f"parametrix: numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERICAL_FAILURE
    except (ParametrixError, ValueError) as e:
        print(f"parametrix: error: {e}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    except OSError as e:
        print(f"parametrix: error: {e}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    return EXIT_OK if output.passed else EXIT_BOUND_VIOLATED


if __name__ == "__main__":
    sys.exit(main())
