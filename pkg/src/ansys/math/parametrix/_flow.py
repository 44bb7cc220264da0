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

"""Deterministic drift flows and linear resolvents."""

import math
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
from numpy.typing import ArrayLike, NDArray

from ._exceptions import DimensionMismatch, EvaluationError, NonFiniteState, UnsortedNodes
from ._logger import logger
from ._models import CoefficientField, DiffusionSpec

MIN_STEPS = 64
MAX_STEP = 0.005
METHOD = "rk4"

Array = NDArray[np.float64]
_Drift = Callable[[Array, Array], Array]


def step_count(length: float) -> int:
    """Number of fixed RK4 steps used over a time interval of the given length."""
    return max(MIN_STEPS, math.ceil(length / MAX_STEP))


def _rk4_knots(
    drift: _Drift, start: Array, sign: Array, h: Array, y: Array, n_steps: int
) -> Tuple[Array, Array]:
    # phi(tau) solves phi' = sign * b(start + sign * tau, phi), phi(0) = y.
    def rhs(tau: Array, state: Array) -> Array:
        return sign[:, None] * drift(start + sign * tau, state)

    knots = np.empty((n_steps + 1,) + y.shape)
    slopes = np.empty_like(knots)
    half = (h / 2.0)[:, None]
    full = h[:, None]
    phi = y.copy()
    knots[0] = phi
    for k in range(n_steps):
        tau = k * h
        k1 = rhs(tau, phi)
        k2 = rhs(tau + h / 2.0, phi + half * k1)
        k3 = rhs(tau + h / 2.0, phi + half * k2)
        k4 = rhs(tau + h, phi + full * k3)
        slopes[k] = k1
        phi = phi + (full / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        knots[k + 1] = phi
    slopes[n_steps] = rhs(n_steps * h, phi)
    return knots, slopes


def _hermite(knots: Array, slopes: Array, h: Array, tau: Array) -> Array:
    n_steps = knots.shape[0] - 1
    scaled = tau / h[:, None]
    index = np.clip(np.floor(scaled).astype(int), 0, n_steps - 1)
    theta = (scaled - index)[..., None]
    member = np.arange(knots.shape[1])[:, None]
    step = h[:, None, None]
    h00 = 2 * theta**3 - 3 * theta**2 + 1
    h10 = theta**3 - 2 * theta**2 + theta
    h01 = -2 * theta**3 + 3 * theta**2
    h11 = theta**3 - theta**2
    return (
        h00 * knots[index, member]
        + h10 * step * slopes[index, member]
        + h01 * knots[index + 1, member]
        + h11 * step * slopes[index + 1, member]
    )


def integrate_flows(
    drift: _Drift,
    t: ArrayLike,
    s: ArrayLike,
    y: ArrayLike,
    record: Optional[ArrayLike] = None,
) -> Tuple[Array, Optional[Array]]:
    """
    Solve a batch of flows :math:`\\theta_{t_i, s_i}(y_i)`.

    Each member is integrated from its terminal time ``s_i`` to ``t_i`` with fixed-step RK4.
    Members with the same number of steps are advanced together.

    Parameters
    ----------
    drift : callable
        Vectorized drift ``b(t, x)`` with ``t`` of shape ``(n,)`` and ``x`` of shape ``(n, d)``.
    t, s : array-like
        Target and terminal times, broadcastable to ``(n,)``. Either order is allowed.
    y : array-like
        Terminal points, shape ``(n, d)``.
    record : array-like, optional
        Extra times per member, shape ``(n, k)``, each between ``t_i`` and ``s_i``. The flow is
        evaluated there by cubic Hermite interpolation of the RK4 knots.

    Returns
    -------
    tuple
        Values at ``t``, shape ``(n, d)``, and values at ``record``, shape ``(n, k, d)``, or
        ``None``.

    Raises
    ------
    NonFiniteState
        If the integration produces a non-finite state.
    """
    y_arr = np.atleast_2d(np.asarray(y, dtype=float))
    n = y_arr.shape[0]
    t_arr = np.broadcast_to(np.asarray(t, dtype=float), (n,))
    s_arr = np.broadcast_to(np.asarray(s, dtype=float), (n,))
    length = np.abs(t_arr - s_arr)
    sign = np.sign(t_arr - s_arr)
    final = y_arr.copy()
    recorded: Optional[Array] = None
    record_arr: Optional[Array] = None
    if record is not None:
        record_arr = np.asarray(record, dtype=float).reshape(n, -1)
        recorded = np.repeat(y_arr[:, None, :], record_arr.shape[1], axis=1)
    steps = np.array([step_count(L) if L > 0.0 else 0 for L in length])
    for n_steps in np.unique(steps[steps > 0]):
        members = np.nonzero(steps == n_steps)[0]
        h = length[members] / n_steps
        try:
            knots, slopes = _rk4_knots(
                drift, s_arr[members], sign[members], h, y_arr[members], int(n_steps)
            )
        except EvaluationError as e:
            raise NonFiniteState(f"Flow integration failed: {e}") from e
        if not np.all(np.isfinite(knots)):
            raise NonFiniteState("Flow integration produced a non-finite state.")
        final[members] = knots[-1]
        if record_arr is not None and recorded is not None:
            tau = np.abs(record_arr[members] - s_arr[members, None])
            recorded[members] = _hermite(knots, slopes, h, tau)
    return final, recorded


def _as_points(y: ArrayLike, dimension: int) -> Tuple[Array, bool]:
    arr = np.asarray(y, dtype=float)
    single = arr.ndim <= 1
    if (single and arr.size != dimension) or (
        not single and (arr.ndim != 2 or arr.shape[-1] != dimension)
    ):
        raise DimensionMismatch(f"Expected points of dimension {dimension}, got shape {arr.shape}.")
    return (arr.reshape(1, dimension) if single else arr), single


def flow_point(spec: DiffusionSpec, t: float, s: float, y: ArrayLike) -> Array:
    """
    Solve the drift flow :math:`\\theta_{t,s}(y)`.

    The flow solves :math:`\\dot\\theta_{w,s}(y) = b(w, \\theta_{w,s}(y))` with
    :math:`\\theta_{s,s}(y) = y`. For ``t < s`` the terminal point is transported backward in
    time. ``t > s`` gives the forward flow :math:`\\theta_{t,s}`, the inverse map of
    :math:`\\theta_{s,t}`.

    Parameters
    ----------
    spec : DiffusionSpec
        Model providing the drift.
    t : float
        Time at which the flow is evaluated.
    s : float
        Terminal time.
    y : array-like
        Terminal point of shape ``(d,)``, or a batch of shape ``(n, d)``.

    Returns
    -------
    numpy.ndarray
        Flow value with the shape of ``y``.

    Raises
    ------
    NonFiniteState
        If the integration produces a non-finite state.

    Examples
    --------
    >>> ou = builtin_model("ou", {"sigma": 0.8})
    >>> flow_point(ou, 0.0, 1.0, [1.0])
    array([0.36787944])
    """
    points, single = _as_points(y, spec.d)
    logger.debug(f"Integrating {points.shape[0]} flow(s) of '{spec.name}' from {s} to {t}")
    values, _ = integrate_flows(spec.drift, t, s, points)
    return values[0] if single else values


class FlowPath:
    """
    Flow trajectory :math:`u \\mapsto \\theta_{u,s}(y)` sampled at ascending nodes.

    Read-only. Build instances with :func:`flow_path`.
    """

    def __init__(
        self, s: float, y: Array, nodes: Array, values: Array, step_size: float, n_steps: int
    ):
        self._s = s
        self._y = y
        self._nodes = nodes
        self._values = values
        self._step_size = step_size
        self._n_steps = n_steps
        for array in (self._y, self._nodes, self._values):
            array.setflags(write=False)

    @property
    def s(self) -> float:
        """Terminal time."""
        return self._s

    @property
    def y(self) -> Array:
        """Terminal point."""
        return self._y

    @property
    def nodes(self) -> Array:
        """Ascending sample times."""
        return self._nodes

    @property
    def values(self) -> Array:
        """Flow values at the nodes, shape ``(m, d)``."""
        return self._values

    @property
    def integrator_meta(self) -> dict:
        """Step size, number of steps and method of the integration."""
        return {"method": METHOD, "step_size": self._step_size, "n_steps": self._n_steps}

    def __repr__(self) -> str:
        """Printable representation of the object."""
        return f"<{self.__class__.__name__} s: {self._s}, nodes: {len(self._nodes)}>"


def flow_path(
    spec: DiffusionSpec, t: float, s: float, y: ArrayLike, nodes: Sequence[float]
) -> FlowPath:
    """
    Sample the flow ending at ``(s, y)`` at the given times, with one integration pass.

    Parameters
    ----------
    spec : DiffusionSpec
        Model providing the drift.
    t, s : float
        Interval end points, ``t <= s``.
    y : array-like
        Terminal point of shape ``(d,)``.
    nodes : sequence of float
        Strictly ascending times, starting at ``t`` and ending at ``s``.

    Returns
    -------
    FlowPath

    Raises
    ------
    UnsortedNodes
        If the nodes are not strictly ascending or do not start at ``t`` and end at ``s``.
    NonFiniteState
        If the integration produces a non-finite state.
    """
    node_arr = np.asarray(nodes, dtype=float)
    if node_arr.ndim != 1 or node_arr.size == 0:
        raise UnsortedNodes("Nodes must be a non-empty sequence of times.")
    if node_arr.size > 1 and not np.all(np.diff(node_arr) > 0.0):
        raise UnsortedNodes("Nodes must be strictly ascending.")
    if node_arr[0] != t or node_arr[-1] != s:
        raise UnsortedNodes(
            f"Nodes must start at t={t} and end at s={s}, got [{node_arr[0]}, {node_arr[-1]}]."
        )
    points, _ = _as_points(y, spec.d)
    logger.debug(f"Sampling flow path of '{spec.name}' at {node_arr.size} nodes")
    _, recorded = integrate_flows(spec.drift, t, s, points, record=node_arr[None, :])
    assert recorded is not None
    values = recorded[0]
    values[-1] = points[0]
    n_steps = step_count(s - t) if s > t else 0
    step_size = (s - t) / n_steps if n_steps else 0.0
    return FlowPath(float(s), points[0].copy(), node_arr.copy(), values, step_size, n_steps)


def flow_gap(
    base: DiffusionSpec, perturbed: DiffusionSpec, t: float, s: float, y: ArrayLike
) -> Array:
    """
    Distance between the flows of two models.

    The distance is :math:`|\\theta_{t,s}(y) - \\theta^\\varepsilon_{t,s}(y)|`.

    Returns a scalar for a single point and an array of shape ``(n,)`` for a batch.
    """
    if base.d != perturbed.d:
        raise DimensionMismatch("Both models must have the same dimension.")
    gap = np.linalg.norm(flow_point(base, t, s, y) - flow_point(perturbed, t, s, y), axis=-1)
    return gap


def linear_moments(
    drift_matrix: CoefficientField, diffusion: ArrayLike, t: float, s: float
) -> Tuple[Array, Array]:
    """
    Resolvent and covariance of a linear diffusion :math:`dX = G(u) X du + \\sigma dW`.

    Integrates :math:`\\dot R = G R` with :math:`R(t, t) = I` and the Lyapunov equation
    :math:`\\dot\\Sigma = G\\Sigma + \\Sigma G^T + \\sigma\\sigma^T` with :math:`\\Sigma(t) = 0`
    from ``t`` to ``s`` using the same fixed-step RK4 rule as the flows.

    Returns
    -------
    tuple of numpy.ndarray
        The resolvent ``R(s, t)`` and the covariance
        :math:`\\int_t^s R(s,u)\\sigma\\sigma^T R(s,u)^T du`.
    """
    sigma = np.asarray(diffusion, dtype=float)
    d = drift_matrix.shape[0]
    if drift_matrix.shape != (d, d) or sigma.shape != (d, d):
        raise DimensionMismatch(
            f"Drift matrix {drift_matrix.shape} and diffusion {sigma.shape} must both be {d}x{d}."
        )
    a = sigma @ sigma.T
    origin = np.zeros(d)

    def G(u: float) -> Array:
        return drift_matrix(u, origin)

    def rhs(u: float, R: Array, cov: Array) -> Tuple[Array, Array]:
        g = G(u)
        return g @ R, g @ cov + cov @ g.T + a

    R = np.eye(d)
    cov = np.zeros((d, d))
    if s <= t:
        return R, cov
    n_steps = step_count(s - t)
    h = (s - t) / n_steps
    for k in range(n_steps):
        u = t + k * h
        r1, c1 = rhs(u, R, cov)
        r2, c2 = rhs(u + h / 2, R + h / 2 * r1, cov + h / 2 * c1)
        r3, c3 = rhs(u + h / 2, R + h / 2 * r2, cov + h / 2 * c2)
        r4, c4 = rhs(u + h, R + h * r3, cov + h * c3)
        R = R + h / 6 * (r1 + 2 * r2 + 2 * r3 + r4)
        cov = cov + h / 6 * (c1 + 2 * c2 + 2 * c3 + c4)
    return R, 0.5 * (cov + cov.T)
