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

"""Reference values: Euler-Maruyama simulation, linear densities and adaptive quadrature."""

import math
from typing import Any, Callable, Dict, List, Optional, Tuple, Union

import numpy as np
from numpy.typing import ArrayLike, NDArray

from ._exceptions import (
    DegenerateInterval,
    DimensionMismatch,
    EvaluationError,
    InvalidParam,
    MaxDepthExceeded,
    NonFinitePath,
)
from ._flow import linear_moments
from ._grid import DEFAULT_THREADS, _GridEvaluator
from ._logger import logger
from ._models import CoefficientField, DiffusionSpec
from ._proxy import check_interval, gaussian_terms

DEFAULT_N_PATHS = 100_000
DEFAULT_N_STEPS = 100
DEFAULT_MC_SEED = 0
MIN_N_PATHS = 1000
MIN_N_STEPS = 16
BATCH_SIZE = 10_000
KDE_CHUNK = 256
DEFAULT_TOLERANCE = 1e-10
DEFAULT_MAX_DEPTH = 50
INITIAL_PANELS = 8
ENDPOINT_OFFSET = 1e-6

Array = NDArray[np.float64]


class McConfig:
    """
    Settings of the Euler-Maruyama density estimate.

    Parameters
    ----------
    n_paths : int, default 100000
        Number of simulated paths, at least 1000.
    n_steps : int, default 100
        Number of time steps, at least 16.
    seed : int, default 0
        Key of the Philox generator. Batch ``i`` uses the stream jumped ``i + 1`` times.
    bandwidth : str or float, default "silverman"
        ``"silverman"`` or a fixed positive bandwidth.

    Raises
    ------
    InvalidParam
        If a setting is out of range.
    """

    def __init__(
        self,
        n_paths: int = DEFAULT_N_PATHS,
        n_steps: int = DEFAULT_N_STEPS,
        seed: int = DEFAULT_MC_SEED,
        bandwidth: Union[str, float] = "silverman",
    ):
        if n_paths < MIN_N_PATHS:
            raise InvalidParam(f"n_paths must be at least {MIN_N_PATHS}, got {n_paths}.")
        if n_steps < MIN_N_STEPS:
            raise InvalidParam(f"n_steps must be at least {MIN_N_STEPS}, got {n_steps}.")
        if not 0 <= seed < 2**64:
            raise InvalidParam(f"seed must be a 64-bit unsigned integer, got {seed}.")
        if isinstance(bandwidth, str):
            if bandwidth != "silverman":
                raise InvalidParam(f"Unknown bandwidth rule '{bandwidth}'.")
        elif not bandwidth > 0.0:
            raise InvalidParam(f"Bandwidth must be positive, got {bandwidth}.")
        self._n_paths = int(n_paths)
        self._n_steps = int(n_steps)
        self._seed = int(seed)
        self._bandwidth = bandwidth if isinstance(bandwidth, str) else float(bandwidth)

    @property
    def n_paths(self) -> int:
        return self._n_paths

    @property
    def n_steps(self) -> int:
        return self._n_steps

    @property
    def seed(self) -> int:
        return self._seed

    @property
    def bandwidth(self) -> Union[str, float]:
        """Bandwidth rule or fixed bandwidth."""
        return self._bandwidth

    def replace(self, **changes: Any) -> "McConfig":
        """Copy with some settings changed."""
        values = self.to_mapping()
        values.update(changes)
        return McConfig(**values)

    def to_mapping(self) -> Dict[str, Any]:
        """Settings as a plain mapping."""
        return {
            "n_paths": self._n_paths,
            "n_steps": self._n_steps,
            "seed": self._seed,
            "bandwidth": self._bandwidth,
        }

    def __repr__(self) -> str:
        """Printable representation of the object."""
        return f"<{self.__class__.__name__} n_paths: {self._n_paths}, n_steps: {self._n_steps}>"


def _simulate_batch(
    spec: DiffusionSpec,
    t: float,
    s: float,
    x: Array,
    size: int,
    n_steps: int,
    generator: np.random.Generator,
) -> Array:
    h = (s - t) / n_steps
    root = math.sqrt(h)
    state = np.repeat(x[None, :], size, axis=0)
    for k in range(n_steps):
        u = t + k * h
        try:
            drift = spec.drift(u, state)
            sigma = spec.sigma(u, state)
        except EvaluationError as e:
            raise NonFinitePath(f"Coefficients failed on a simulated path at u={u}: {e}") from e
        noise = generator.standard_normal((size, spec.d))
        state = state + drift * h + root * np.einsum("nij,nj->ni", sigma, noise)
        if not np.all(np.isfinite(state)):
            raise NonFinitePath(f"A simulated path is not finite at u={u + h}.")
    return state


def simulate_endpoints(
    spec: DiffusionSpec,
    t: float,
    s: float,
    x: ArrayLike,
    cfg: Optional[McConfig] = None,
    threads: int = DEFAULT_THREADS,
) -> Array:
    """
    Euler-Maruyama endpoints at time ``s`` of paths started at ``x`` at time ``t``.

    Paths are simulated in batches of 10000 with independent Philox streams, so the output does
    not depend on the number of threads.

    Returns
    -------
    numpy.ndarray
        Endpoints of shape ``(n_paths, d)``.

    Raises
    ------
    NonFinitePath
        If a path or a coefficient evaluation is not finite.
    """
    check_interval(t, s)
    cfg = cfg or McConfig()
    x_arr = np.asarray(x, dtype=float).reshape(spec.d)
    sizes = [min(BATCH_SIZE, cfg.n_paths - start) for start in range(0, cfg.n_paths, BATCH_SIZE)]
    logger.info(
        f"Simulating {cfg.n_paths} Euler-Maruyama paths of '{spec.name}' on [{t}, {s}] "
        f"in {len(sizes)} batches"
    )

    def run_batch(index: int) -> Array:
        generator = np.random.Generator(np.random.Philox(key=cfg.seed).jumped(index + 1))
        return _simulate_batch(spec, t, s, x_arr, sizes[index], cfg.n_steps, generator)

    evaluator: _GridEvaluator[int, Array] = _GridEvaluator(run_batch, threads)
    return np.concatenate([batch for _, batch in evaluator.evaluate(list(range(len(sizes))))])


def silverman_bandwidth(samples: Array) -> Array:
    """Per-axis Silverman bandwidth :math:`(4/(d+2))^{1/(d+4)}\\hat\\sigma n^{-1/(d+4)}`."""
    n, d = samples.shape
    spread = samples.std(axis=0, ddof=1)
    return (4.0 / (d + 2.0)) ** (1.0 / (d + 4.0)) * spread * n ** (-1.0 / (d + 4.0))


def kernel_density(
    samples: Array, points: Array, bandwidth: Union[str, float] = "silverman"
) -> Array:
    """Product Gaussian kernel density estimate of ``samples`` at ``points``."""
    if bandwidth == "silverman":
        h = silverman_bandwidth(samples)
    else:
        h = np.full(samples.shape[1], float(bandwidth))
    normalization = np.prod(h) * (2.0 * math.pi) ** (samples.shape[1] / 2.0)
    values = np.empty(points.shape[0])
    for start in range(0, points.shape[0], KDE_CHUNK):
        chunk = points[start : start + KDE_CHUNK]
        scaled = (chunk[:, None, :] - samples[None, :, :]) / h
        values[start : start + KDE_CHUNK] = np.exp(-0.5 * np.sum(scaled**2, axis=-1)).mean(axis=1)
    return values / normalization


def em_density(
    spec: DiffusionSpec,
    t: float,
    s: float,
    x: ArrayLike,
    y_grid: ArrayLike,
    cfg: Optional[McConfig] = None,
    threads: int = DEFAULT_THREADS,
) -> Array:
    """
    Monte-Carlo estimate of the transition density :math:`p(t, s, x, \\cdot)` on a grid.

    Parameters
    ----------
    spec : DiffusionSpec
        Model.
    t, s : float
        Start and terminal times, ``t < s``.
    x : array-like
        Starting point.
    y_grid : array-like
        Terminal points of shape ``(n, d)``.
    cfg : McConfig, optional
        Simulation settings.
    threads : int, default 1
        Worker threads.

    Returns
    -------
    numpy.ndarray
        Density estimates of shape ``(n,)``. Identical for identical settings.

    Raises
    ------
    NonFinitePath
        If a simulated path is not finite.
    """
    cfg = cfg or McConfig()
    endpoints = simulate_endpoints(spec, t, s, x, cfg, threads)
    points = np.asarray(y_grid, dtype=float).reshape(-1, spec.d)
    return kernel_density(endpoints, points, cfg.bandwidth)


def _as_matrix_field(G: Any, d: Optional[int]) -> CoefficientField:
    if isinstance(G, CoefficientField):
        return G
    entries = np.asarray(G, dtype=object)
    if entries.ndim != 2:
        raise DimensionMismatch(f"Drift matrix must be two-dimensional, got shape {entries.shape}.")
    return CoefficientField(entries.tolist(), d or entries.shape[0])


def exact_linear_density(
    G: Any,
    sigma_const: ArrayLike,
    t: float,
    s: float,
    x: ArrayLike,
    y: ArrayLike,
) -> Union[float, Array]:
    """
    Transition density of the linear diffusion :math:`dX = G(u)X du + \\sigma dW`.

    The density is Gaussian with mean ``R(s, t) x`` and covariance
    :math:`\\int_t^s R(s,u)\\sigma\\sigma^T R(s,u)^T du`, with the resolvent ``R`` integrated by
    the flow RK4 rule.

    Parameters
    ----------
    G : CoefficientField or nested sequence
        ``d`` by ``d`` drift matrix, as constants or time-only expressions.
    sigma_const : array-like
        Constant ``d`` by ``d`` diffusion matrix.
    t, s : float
        Start and terminal times, ``t < s``.
    x : array-like
        Starting point.
    y : array-like
        Terminal point, or points of shape ``(n, d)``.

    Returns
    -------
    float or numpy.ndarray
        Density for a single point, array of shape ``(n,)`` for a batch.

    Raises
    ------
    DimensionMismatch
        If the matrices or points have inconsistent dimensions.
    """
    check_interval(t, s)
    sigma = np.atleast_2d(np.asarray(sigma_const, dtype=float))
    field = _as_matrix_field(G, sigma.shape[0])
    d = field.shape[0]
    x_arr = np.asarray(x, dtype=float).reshape(-1)
    y_arr = np.asarray(y, dtype=float)
    single = y_arr.ndim <= 1
    y_arr = y_arr.reshape(-1, x_arr.size)
    if x_arr.size != d:
        raise DimensionMismatch(f"Starting point has dimension {x_arr.size}, expected {d}.")
    resolvent, cov = linear_moments(field, sigma, t, s)
    covariances = np.broadcast_to(cov, (y_arr.shape[0], d, d))
    density, _, _ = gaussian_terms(y_arr - resolvent @ x_arr, covariances)
    return float(density[0]) if single else density


Integrand = Callable[[float], float]


def _substituted(
    f: Integrand, a: float, b: float, singular_endpoint: Optional[str], power: float
) -> Tuple[Integrand, float, float]:
    if math.isinf(b):

        def tail(u: float) -> float:
            if u >= 1.0:
                return 0.0
            return f(a + u / (1.0 - u)) / (1.0 - u) ** 2

        return tail, 0.0, 1.0
    if singular_endpoint is None:
        return f, a, b
    length = b - a

    def mapped(w: float) -> float:
        # The singular endpoint itself is replaced by a nearby node.
        w = max(w, ENDPOINT_OFFSET)
        jacobian = power * length * w ** (power - 1.0)
        if singular_endpoint == "left":
            return jacobian * f(a + length * w**power)
        return jacobian * f(b - length * w**power)

    return mapped, 0.0, 1.0


def _simpson(fa: float, fm: float, fb: float, a: float, b: float) -> float:
    return (b - a) / 6.0 * (fa + 4.0 * fm + fb)


def adaptive_integrate(
    f: Integrand,
    a: float,
    b: float,
    tol: float = DEFAULT_TOLERANCE,
    max_depth: int = DEFAULT_MAX_DEPTH,
    singular_endpoint: Optional[str] = None,
    power: float = 2.0,
) -> float:
    """
    Adaptive Simpson quadrature of a scalar function.

    Intervals are bisected until the local Richardson error estimate is below the local share
    of ``tol``. An infinite upper limit is mapped to ``[0, 1)`` with ``x = a + u/(1-u)``. An
    integrable endpoint singularity is removed with ``x = a + (b-a) w^power`` (``"left"``) or
    ``x = b - (b-a) w^power`` (``"right"``).

    Parameters
    ----------
    f : callable
        Scalar integrand.
    a, b : float
        Limits with ``a < b``. ``b`` may be ``math.inf``.
    tol : float, default 1e-10
        Absolute tolerance, positive.
    max_depth : int, default 50
        Largest bisection depth.
    singular_endpoint : {"left", "right"}, optional
        Endpoint carrying an integrable singularity.
    power : float, default 2
        Exponent of the endpoint substitution.

    Returns
    -------
    float

    Raises
    ------
    DegenerateInterval
        If ``b <= a``. Reversed limits are rejected rather than flipped.
    MaxDepthExceeded
        If an interval needs more than ``max_depth`` bisections.
    """
    if not b > a:
        raise DegenerateInterval(a, b, f"Expected a < b, got a={a!r} and b={b!r}.")
    if not tol > 0.0:
        raise InvalidParam(f"Tolerance must be positive, got {tol}.")
    if singular_endpoint not in (None, "left", "right"):
        raise InvalidParam(f"Unknown singular endpoint '{singular_endpoint}'.")
    if not power >= 1.0:
        raise InvalidParam(f"Substitution power must be at least 1, got {power}.")
    g, lower, upper = _substituted(f, a, b, singular_endpoint, power)
    edges = np.linspace(lower, upper, INITIAL_PANELS + 1)
    total = 0.0
    panel_tol = tol / INITIAL_PANELS
    for left, right in zip(edges[:-1], edges[1:]):
        fa, fb = g(float(left)), g(float(right))
        middle = 0.5 * (left + right)
        fm = g(float(middle))
        stack: List[Tuple[float, float, float, float, float, float, float, int]] = [
            (float(left), float(right), fa, fm, fb, _simpson(fa, fm, fb, left, right), panel_tol, 0)
        ]
        while stack:
            lo, hi, f_lo, f_mid, f_hi, whole, local_tol, depth = stack.pop()
            mid = 0.5 * (lo + hi)
            f_left = g(0.5 * (lo + mid))
            f_right = g(0.5 * (mid + hi))
            left_part = _simpson(f_lo, f_left, f_mid, lo, mid)
            right_part = _simpson(f_mid, f_right, f_hi, mid, hi)
            error = left_part + right_part - whole
            if abs(error) <= 15.0 * local_tol:
                total += left_part + right_part + error / 15.0
                continue
            if depth + 1 >= max_depth:
                raise MaxDepthExceeded(
                    f"Adaptive quadrature needed more than {max_depth} bisections on [{lo}, {hi}]."
                )
            stack.append((lo, mid, f_lo, f_left, f_mid, left_part, local_tol / 2.0, depth + 1))
            stack.append((mid, hi, f_mid, f_right, f_hi, right_part, local_tol / 2.0, depth + 1))
    if not math.isfinite(total):
        raise EvaluationError(f"Adaptive quadrature on [{a}, {b}] produced a non-finite value.")
    logger.debug(f"Adaptive quadrature on [{a}, {b}] gave {total:.17g}")
    return total
