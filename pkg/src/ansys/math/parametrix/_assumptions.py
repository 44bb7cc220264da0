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

"""Sampled audit of the ellipticity, regularity and flow-closeness assumptions."""

import math
from typing import Dict, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.stats import qmc

from ._exceptions import DimensionMismatch, EmptyGrid, OutOfInterval
from ._flow import flow_gap
from ._grid import DEFAULT_THREADS, _GridEvaluator
from ._logger import logger
from ._models import DiffusionSpec
from ._special import composite_gauss_legendre

AUDIT_TIMES = 21
AUDIT_SPACE = 41
AUDIT_BOX = 5.0
MAX_TENSOR_POINTS = 20_000
AUDIT_SOBOL_LOG2 = 12
COMPARISON_LOG2 = 8
COMPARISON_SEED = 20240601
COMPARISON_SCALES = (1.0, 0.1, 0.01)
MAX_FLOW_POINTS = 64
AUDIT_TOLERANCE = 1e-9
PANEL = 0.05
PANEL_NODES = 8

Array = NDArray[np.float64]
Audited = Union[DiffusionSpec, Tuple[DiffusionSpec, DiffusionSpec]]


def default_audit_grid(
    d: int,
    horizon_T: float,
    n_time: int = AUDIT_TIMES,
    n_space: int = AUDIT_SPACE,
    box: float = AUDIT_BOX,
) -> Array:
    """
    Audit points ``(t, x_1, ..., x_d)`` over ``[0, T] x [-box, box]^d``, shape ``(n, 1 + d)``.

    The spatial part is a tensor grid with ``n_space`` nodes per axis while that stays below
    20000 points, and a scrambled Sobol cloud of 4096 points otherwise.
    """
    times = np.linspace(0.0, horizon_T, n_time)
    if n_space**d <= MAX_TENSOR_POINTS:
        axis = np.linspace(-box, box, n_space)
        mesh = np.meshgrid(*([axis] * d), indexing="ij")
        space = np.stack([m.ravel() for m in mesh], axis=-1)
    else:
        sobol = qmc.Sobol(d, scramble=True, seed=COMPARISON_SEED)
        space = qmc.scale(sobol.random_base2(AUDIT_SOBOL_LOG2), [-box] * d, [box] * d)
    rows = np.repeat(times, space.shape[0])
    return np.concatenate([rows[:, None], np.tile(space, (n_time, 1))], axis=-1)


def default_comparison_pairs(d: int, box: float = AUDIT_BOX, seed: int = COMPARISON_SEED) -> Array:
    """
    Comparison pairs ``(x, x')`` from a fixed-seed Sobol cloud, shape ``(n, 2, d)``.

    Half the pairs join two cloud points. The other half join a cloud point to a neighbour at
    distances 1, 0.1 and 0.01, so that local ratios are sampled as well.
    """
    sobol = qmc.Sobol(2 * d, scramble=True, seed=seed)
    cloud = qmc.scale(sobol.random_base2(COMPARISON_LOG2), [-box] * (2 * d), [box] * (2 * d))
    far = np.stack([cloud[:, :d], cloud[:, d:]], axis=1)
    directions = cloud[:, d:] - cloud[:, :d]
    directions /= np.linalg.norm(directions, axis=-1, keepdims=True)
    scales = np.resize(np.array(COMPARISON_SCALES), cloud.shape[0])
    near = np.stack([cloud[:, :d], cloud[:, :d] + scales[:, None] * directions], axis=1)
    return np.concatenate([far, near], axis=0)


class AssumptionReport:
    """
    Empirical constants of the model assumptions on an audit grid.

    Read-only. Every constant is the largest ratio found on the grid. The flow-closeness
    constants are only available when a pair of models is audited.
    """

    def __init__(
        self,
        ellipticity_range: Tuple[float, float],
        holder_const_sigma: float,
        lipschitz_const_b: float,
        growth_const: float,
        flow_closeness_const: Optional[float],
        flow_gap_const: Optional[float],
        passed: Dict[str, bool],
        n_points: int,
    ):
        self._ellipticity_range = ellipticity_range
        self._holder_const_sigma = holder_const_sigma
        self._lipschitz_const_b = lipschitz_const_b
        self._growth_const = growth_const
        self._flow_closeness_const = flow_closeness_const
        self._flow_gap_const = flow_gap_const
        self._passed = dict(passed)
        self._n_points = n_points

    @property
    def ellipticity_range(self) -> Tuple[float, float]:
        """Smallest and largest eigenvalue of :math:`\\sigma\\sigma^T` on the grid."""
        return self._ellipticity_range

    @property
    def holder_const_sigma(self) -> float:
        """Largest Hölder ratio of the diffusion coefficient over the comparison pairs."""
        return self._holder_const_sigma

    @property
    def lipschitz_const_b(self) -> float:
        """Largest Lipschitz ratio of the drift over the comparison pairs."""
        return self._lipschitz_const_b

    @property
    def growth_const(self) -> float:
        """Largest ratio :math:`|b(t,x)| / (1 + |x|)` on the grid."""
        return self._growth_const

    @property
    def flow_closeness_const(self) -> Optional[float]:
        """Largest :math:`\\int_t^s|b_\\varepsilon - b|(u,x)du / \\sqrt{s-t}`, for pairs."""
        return self._flow_closeness_const

    @property
    def flow_gap_const(self) -> Optional[float]:
        """
        Largest :math:`|\\theta^\\varepsilon_{t,s}(y) - \\theta_{t,s}(y)| / \\sqrt{s-t}`, for pairs.
        """
        return self._flow_gap_const

    @property
    def passed(self) -> Dict[str, bool]:
        """Pass flag per assumption: ``ellipticity``, ``regularity`` and ``flows`` for pairs."""
        return dict(self._passed)

    @property
    def all_passed(self) -> bool:
        """Whether every audited assumption holds."""
        return all(self._passed.values())

    @property
    def n_points(self) -> int:
        """Number of audited points."""
        return self._n_points

    def as_rows(self) -> Sequence[Tuple[str, float, str]]:
        """``(quantity, value, status)`` rows, as written by the command line."""
        rows = [
            ("ellipticity_min", self._ellipticity_range[0], self._status("ellipticity")),
            ("ellipticity_max", self._ellipticity_range[1], self._status("ellipticity")),
            ("holder_const_sigma", self._holder_const_sigma, self._status("regularity")),
            ("lipschitz_const_b", self._lipschitz_const_b, self._status("regularity")),
            ("growth_const", self._growth_const, self._status("regularity")),
        ]
        if self._flow_closeness_const is not None and self._flow_gap_const is not None:
            rows.append(("flow_closeness_const", self._flow_closeness_const, self._status("flows")))
            rows.append(("flow_gap_const", self._flow_gap_const, self._status("flows")))
        return rows

    def _status(self, key: str) -> str:
        return "pass" if self._passed[key] else "fail"

    def __repr__(self) -> str:
        """Printable representation of the object."""
        return f"<{self.__class__.__name__} passed: {self.all_passed}>"


def _ratio_max(numerator: Array, denominator: Array) -> float:
    mask = denominator > 0.0
    if not np.any(mask):
        return 0.0
    return float((numerator[mask] / denominator[mask]).max())


def _eigenvalue_range(
    specs: Sequence[DiffusionSpec], times: Array, points: Array
) -> Tuple[float, float]:
    low, high = math.inf, -math.inf
    for spec in specs:
        eigenvalues = np.linalg.eigvalsh(spec.a(times, points))
        low = min(low, float(eigenvalues.min()))
        high = max(high, float(eigenvalues.max()))
    return low, high


def _regularity(
    specs: Sequence[DiffusionSpec], times: Array, points: Array, pairs: Array
) -> Tuple[float, float, float]:
    gamma = specs[0].gamma
    distances = np.linalg.norm(pairs[:, 0] - pairs[:, 1], axis=-1)
    holder = lipschitz = 0.0
    for time in np.unique(times):
        for spec in specs:
            drift = spec.drift(time, pairs)
            sigma = spec.sigma(time, pairs)
            drift_change = np.linalg.norm(drift[:, 0] - drift[:, 1], axis=-1)
            sigma_change = np.linalg.norm(
                (sigma[:, 0] - sigma[:, 1]).reshape(pairs.shape[0], -1), axis=-1
            )
            lipschitz = max(lipschitz, _ratio_max(drift_change, distances))
            holder = max(holder, _ratio_max(sigma_change, distances**gamma))
    scale = 1.0 + np.linalg.norm(points, axis=-1)
    growth = max(
        float((np.linalg.norm(spec.drift(times, points), axis=-1) / scale).max()) for spec in specs
    )
    return holder, lipschitz, growth


def _flow_constants(
    base: DiffusionSpec, perturbed: DiffusionSpec, times: Array, points: Array, threads: int
) -> Tuple[float, float]:
    audit_times = np.unique(times)
    space = np.unique(points, axis=0)
    if space.shape[0] > MAX_FLOW_POINTS:
        space = space[np.linspace(0, space.shape[0] - 1, MAX_FLOW_POINTS).astype(int)]
    cells = [(float(t), float(s)) for i, t in enumerate(audit_times) for s in audit_times[i + 1 :]]

    def audit_cell(cell: Tuple[float, float]) -> Tuple[float, float]:
        t, s = cell
        nodes, weights = composite_gauss_legendre(t, s, PANEL_NODES, PANEL)
        u, x = nodes[:, None], space[None, :, :]
        gap = np.linalg.norm(perturbed.drift(u, x) - base.drift(u, x), axis=-1)
        closeness = float((weights @ gap).max()) / math.sqrt(s - t)
        flows = float(np.max(flow_gap(base, perturbed, t, s, space))) / math.sqrt(s - t)
        return closeness, flows

    if not cells:
        return 0.0, 0.0
    evaluator: _GridEvaluator[Tuple[float, float], Tuple[float, float]] = _GridEvaluator(
        audit_cell, threads
    )
    results = [value for _, value in evaluator.evaluate(cells)]
    return max(r[0] for r in results), max(r[1] for r in results)


def check_assumptions(
    spec: Audited,
    audit_grid: Optional[ArrayLike] = None,
    comparison_pairs: Optional[ArrayLike] = None,
    threads: int = DEFAULT_THREADS,
) -> AssumptionReport:
    """
    Audit the model assumptions on a finite grid.

    The ellipticity check compares the eigenvalues of :math:`\\sigma\\sigma^T` with
    ``[1/Lambda, Lambda]``. The regularity check compares the Lipschitz ratio of the drift, the
    Hölder ratio of the diffusion coefficient and the growth ratio
    :math:`|b(t,x)|/(1+|x|)` with ``K``. For a pair of models every constant is the larger of the
    two models' values, and the flow check computes
    :math:`\\int_t^s|b_\\varepsilon - b|(u,x)du/\\sqrt{s-t}` over all pairs of audit times.

    Parameters
    ----------
    spec : DiffusionSpec or tuple of DiffusionSpec
        Model, or ``(base, perturbed)`` pair.
    audit_grid : array-like, optional
        Points ``(t, x_1, ..., x_d)`` with ``t`` in ``[0, T]``. Defaults to
        :func:`default_audit_grid`.
    comparison_pairs : array-like, optional
        Point pairs of shape ``(n, 2, d)``. Defaults to :func:`default_comparison_pairs`.
    threads : int, default 1
        Worker threads of the flow check.

    Returns
    -------
    AssumptionReport

    Raises
    ------
    EmptyGrid
        If the audit grid or the comparison set is empty.
    OutOfInterval
        If an audit time is outside ``[0, T]``.
    """
    specs: Tuple[DiffusionSpec, ...] = spec if isinstance(spec, tuple) else (spec,)
    first = specs[0]
    d = first.d
    if any(other.d != d for other in specs):
        raise DimensionMismatch("Audited models must have the same dimension.")
    horizon = min(other.horizon_T for other in specs)
    if audit_grid is None:
        audit_grid = default_audit_grid(d, horizon)
    if comparison_pairs is None:
        comparison_pairs = default_comparison_pairs(d)
    grid = np.asarray(audit_grid, dtype=float).reshape(-1, 1 + d)
    pairs = np.asarray(comparison_pairs, dtype=float).reshape(-1, 2, d)
    if grid.shape[0] == 0 or pairs.shape[0] == 0:
        raise EmptyGrid("The audit grid and the comparison set must not be empty.")
    times, points = grid[:, 0], grid[:, 1:]
    if np.any(times < 0.0) or np.any(times > horizon * (1.0 + AUDIT_TOLERANCE)):
        raise OutOfInterval(f"Audit times must lie in [0, {horizon}].")
    logger.info(
        f"Auditing assumptions of {', '.join(s.name for s in specs)} on {grid.shape[0]} points"
    )
    Lambda = max(other.ellipticity_Lambda for other in specs)
    K = max(other.lipschitz_K for other in specs)
    low, high = _eigenvalue_range(specs, times, points)
    holder, lipschitz, growth = _regularity(specs, times, points, pairs)
    tolerance = AUDIT_TOLERANCE * max(1.0, K, Lambda)
    passed = {
        "ellipticity": low >= 1.0 / Lambda - tolerance and high <= Lambda + tolerance,
        "regularity": max(holder, lipschitz) <= K + tolerance and growth <= K + tolerance,
    }
    closeness: Optional[float] = None
    gap: Optional[float] = None
    if len(specs) == 2:
        closeness, gap = _flow_constants(specs[0], specs[1], times, points, threads)
        passed["flows"] = math.isfinite(closeness) and math.isfinite(gap)
    logger.debug(
        f"Audit found eigenvalues in [{low:.6g}, {high:.6g}], Hölder {holder:.6g}, "
        f"Lipschitz {lipschitz:.6g}, growth {growth:.6g}"
    )
    return AssumptionReport(
        (low, high), holder, lipschitz, growth, closeness, gap, passed, grid.shape[0]
    )
