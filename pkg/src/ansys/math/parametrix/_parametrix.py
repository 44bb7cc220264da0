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

"""Parametrix kernel, time-space convolution and the truncated parametrix series."""

import math
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.interpolate import RegularGridInterpolator

from ._exceptions import InvalidParam, NonFiniteIntegrand, QuadratureBudgetExceeded
from ._flow import integrate_flows
from ._logger import logger
from ._models import DiffusionSpec
from ._proxy import (
    DEFAULT_N_QUAD,
    MajorantParams,
    check_interval,
    frozen_geometry,
    gaussian_terms,
    majorant_batch,
)
from ._special import gamma_fn, log_gamma, singular_rule

DEFAULT_N_TIME = 24
DEFAULT_N_SPACE = 61
DEFAULT_SPACE_RADIUS = 6.0
DEFAULT_ORDER = 4
DEFAULT_N_MC = 4096
DEFAULT_MAX_GRID_POINTS = 20_000_000
MIN_N_TIME = 8
MIN_N_SPACE = 3
MIN_SPACE_RADIUS = 5.0
MC_DIMENSION = 3
NEGATIVE_TOTAL_TOLERANCE = 1e-6
TAIL_MAX_TERMS = 400

Array = NDArray[np.float64]
Kernel = Callable[[float, float, ArrayLike, ArrayLike], Array]


class QuadConfig:
    """
    Quadrature settings of convolutions and of the parametrix series.

    Parameters
    ----------
    n_time : int, default 24
        Time nodes per half interval of a convolution, and time cells of the layer grid.
    n_space : int, default 61
        Spatial nodes per axis of the deterministic grids.
    space_radius : float, default 6.0
        Half-width of the spatial grids in units of :math:`\\sqrt{\\Lambda (s - t)}`.
    singularity_power : float, optional
        Exponent ``p`` of the endpoint substitution. Defaults to ``gamma / 2``.
    n_mc : int, optional
        Monte-Carlo samples per time node for the space integral. Used when set, and by default
        in dimension 3 and above.
    seed : int, default 0
        Seed of the Monte-Carlo space integrals.
    n_quad : int, default 16
        Gauss-Legendre nodes of the proxy covariances.
    max_grid_points : int, default 20000000
        Largest number of cached kernel values allowed.

    Raises
    ------
    InvalidParam
        If ``n_time < 8`` or ``space_radius < 5``, or another setting is out of range.
    """

    def __init__(
        self,
        n_time: int = DEFAULT_N_TIME,
        n_space: int = DEFAULT_N_SPACE,
        space_radius: float = DEFAULT_SPACE_RADIUS,
        singularity_power: Optional[float] = None,
        n_mc: Optional[int] = None,
        seed: int = 0,
        n_quad: int = DEFAULT_N_QUAD,
        max_grid_points: int = DEFAULT_MAX_GRID_POINTS,
    ):
        if n_time < MIN_N_TIME:
            raise InvalidParam(f"n_time must be at least {MIN_N_TIME}, got {n_time}.")
        if n_space < MIN_N_SPACE:
            raise InvalidParam(f"n_space must be at least {MIN_N_SPACE}, got {n_space}.")
        if space_radius < MIN_SPACE_RADIUS:
            raise InvalidParam(
                f"space_radius must be at least {MIN_SPACE_RADIUS}, got {space_radius}."
            )
        if singularity_power is not None and not 0.0 < singularity_power <= 1.0:
            raise InvalidParam(f"singularity_power must be in (0, 1], got {singularity_power}.")
        if n_mc is not None and n_mc < 1:
            raise InvalidParam(f"n_mc must be positive, got {n_mc}.")
        if n_quad < 8:
            raise InvalidParam(f"n_quad must be at least 8, got {n_quad}.")
        self._n_time = int(n_time)
        self._n_space = int(n_space)
        self._space_radius = float(space_radius)
        self._singularity_power = singularity_power
        self._n_mc = n_mc
        self._seed = int(seed)
        self._n_quad = int(n_quad)
        self._max_grid_points = int(max_grid_points)

    @property
    def n_time(self) -> int:
        """Time nodes per half interval."""
        return self._n_time

    @property
    def n_space(self) -> int:
        """Spatial nodes per axis."""
        return self._n_space

    @property
    def space_radius(self) -> float:
        """Spatial truncation radius in units of :math:`\\sqrt{\\Lambda (s - t)}`."""
        return self._space_radius

    @property
    def singularity_power(self) -> Optional[float]:
        """Exponent of the endpoint substitution, ``None`` for ``gamma / 2``."""
        return self._singularity_power

    @property
    def n_mc(self) -> Optional[int]:
        """Monte-Carlo samples per time node, if set."""
        return self._n_mc

    @property
    def seed(self) -> int:
        """Seed of the Monte-Carlo space integrals."""
        return self._seed

    @property
    def n_quad(self) -> int:
        """Gauss-Legendre nodes of the proxy covariances."""
        return self._n_quad

    @property
    def max_grid_points(self) -> int:
        """Largest number of cached kernel values."""
        return self._max_grid_points

    def power(self, gamma: float) -> float:
        """Exponent of the endpoint substitution for a model with Hölder exponent ``gamma``."""
        return self._singularity_power if self._singularity_power is not None else gamma / 2.0

    def replace(self, **overrides: Any) -> "QuadConfig":
        """Copy of the configuration with some settings replaced."""
        values = self.to_mapping()
        values.update(overrides)
        return QuadConfig(**values)

    def to_mapping(self) -> Dict[str, Any]:
        """Settings as a dictionary of keyword arguments."""
        return {
            "n_time": self._n_time,
            "n_space": self._n_space,
            "space_radius": self._space_radius,
            "singularity_power": self._singularity_power,
            "n_mc": self._n_mc,
            "seed": self._seed,
            "n_quad": self._n_quad,
            "max_grid_points": self._max_grid_points,
        }

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, QuadConfig):
            return NotImplemented
        return self.to_mapping() == other.to_mapping()

    def __repr__(self) -> str:
        """Printable representation of the object."""
        return (
            f"<{self.__class__.__name__} n_time: {self._n_time}, n_space: {self._n_space}, "
            f"space_radius: {self._space_radius}>"
        )


def kernel_batch(spec: DiffusionSpec, v: ArrayLike, w: Array, theta: Array, cov: Array) -> Array:
    """
    Parametrix kernel from precomputed frozen geometry.

    Evaluates :math:`H(v, u, w, z)` where ``theta`` and ``cov`` are the flow end point
    :math:`\\theta_{v,u}(z)` and the proxy covariance. All arguments broadcast.
    """
    density, u, precision = gaussian_terms(theta - w, cov)
    a_diff = spec.a(v, w) - spec.a(v, theta)
    b_diff = spec.drift(v, w) - spec.drift(v, theta)
    outer = u[..., :, None] * u[..., None, :] - precision
    second = np.einsum("...ij,...ij->...", a_diff, outer)
    first = np.einsum("...i,...i->...", b_diff, u)
    return (0.5 * second + first) * density


def kernel_H(spec: DiffusionSpec, t: float, s: float, x: ArrayLike, y: ArrayLike) -> float:
    """
    Evaluate the parametrix kernel :math:`H = (L - \\tilde L)\\tilde p`.

    .. math::

        H(t,s,x,y) = \\frac12 \\sum_{ij} (a_{ij}(t,x) - a_{ij}(t,\\theta_{t,s}(y)))
        \\partial^2_{x_ix_j}\\tilde p + \\sum_i (b_i(t,x) - b_i(t,\\theta_{t,s}(y)))
        \\partial_{x_i}\\tilde p

    Parameters
    ----------
    spec : DiffusionSpec
        Model.
    t, s : float
        Start and terminal times, ``t < s``.
    x, y : array-like
        Starting and terminal points.

    Returns
    -------
    float

    Raises
    ------
    DegenerateInterval
        If ``t >= s``.
    """
    return float(KernelH(spec)(t, s, x, y)[0])


class _BatchKernel:
    def __init__(self, spec: DiffusionSpec, n_quad: int = DEFAULT_N_QUAD):
        self._spec = spec
        self._n_quad = n_quad

    @property
    def spec(self) -> DiffusionSpec:
        """Model the kernel belongs to."""
        return self._spec

    def _points(
        self, t: float, s: float, x: ArrayLike, y: ArrayLike
    ) -> Tuple[Array, Array, Array, Array]:
        check_interval(t, s)
        d = self._spec.d
        x_arr = np.asarray(x, dtype=float).reshape(-1, d)
        y_arr = np.asarray(y, dtype=float).reshape(-1, d)
        if y_arr.shape[0] == 1:
            theta, cov = frozen_geometry(self._spec, t, s, y_arr, self._n_quad)
            return x_arr, y_arr, theta, cov
        x_arr, y_arr = np.broadcast_arrays(x_arr, y_arr)
        theta, cov = frozen_geometry(self._spec, t, s, y_arr, self._n_quad)
        return x_arr, y_arr, theta, cov


class ProxyKernel(_BatchKernel):
    """Vectorized proxy density :math:`\\tilde p(t, s, x, y)` usable as a convolution factor."""

    def __call__(self, t: float, s: float, x: ArrayLike, y: ArrayLike) -> Array:
        x_arr, _, theta, cov = self._points(t, s, x, y)
        density, _, _ = gaussian_terms(theta - x_arr, cov)
        return density


class KernelH(_BatchKernel):
    """Vectorized parametrix kernel :math:`H(t, s, x, y)` usable as a convolution factor."""

    def __call__(self, t: float, s: float, x: ArrayLike, y: ArrayLike) -> Array:
        x_arr, _, theta, cov = self._points(t, s, x, y)
        return kernel_batch(self._spec, t, x_arr, theta, cov)


class MajorantKernel:
    """Vectorized Gaussian majorant :math:`\\bar p(t, s, x, y)` usable as a convolution factor."""

    def __init__(self, params: MajorantParams, spec: DiffusionSpec):
        self._params = params
        self._spec = spec

    def __call__(self, t: float, s: float, x: ArrayLike, y: ArrayLike) -> Array:
        d = self._spec.d
        x_arr = np.asarray(x, dtype=float).reshape(-1, d)
        y_arr = np.asarray(y, dtype=float).reshape(-1, d)
        return majorant_batch(self._params, self._spec, t, s, x_arr, y_arr)


def _xi_grid(n_space: int, d: int) -> Tuple[Array, Array, Array]:
    axis = np.linspace(-1.0, 1.0, n_space)
    axis_weights = np.full(n_space, axis[1] - axis[0])
    axis_weights[[0, -1]] *= 0.5
    mesh = np.meshgrid(*([axis] * d), indexing="ij")
    weight_mesh = np.meshgrid(*([axis_weights] * d), indexing="ij")
    points = np.stack([m.ravel() for m in mesh], axis=-1)
    weights = np.prod(np.stack([w.ravel() for w in weight_mesh], axis=0), axis=0)
    return axis, points, weights


def _forward_centers(spec: DiffusionSpec, t: float, x: Array, times: Array) -> Array:
    # theta_{v,t}(x) for every v in ``times``, all at least t.
    if times.size == 0:
        return np.empty((0, spec.d))
    horizon = float(times.max())
    if horizon <= t:
        return np.repeat(x[None, :], times.size, axis=0)
    _, recorded = integrate_flows(spec.drift, horizon, t, x[None, :], record=times[None, :])
    assert recorded is not None
    return recorded[0]


def _check_finite(values: Array, what: str) -> None:
    if not np.all(np.isfinite(values)):
        raise NonFiniteIntegrand(f"Non-finite values in the {what}.")


def _use_monte_carlo(quad: QuadConfig, d: int) -> bool:
    return quad.n_mc is not None or d >= MC_DIMENSION


def _sampler(quad: QuadConfig, d: int) -> Optional[np.random.Generator]:
    if not _use_monte_carlo(quad, d):
        return None
    return np.random.Generator(np.random.Philox(key=quad.seed))


def _space_integral(
    f: Kernel,
    g: Kernel,
    t: float,
    u: float,
    s: float,
    x: Array,
    y: Array,
    center: Array,
    half_width: Array,
    quad: QuadConfig,
    rng: Optional[np.random.Generator],
) -> float:
    d = x.shape[0]
    if rng is not None:
        n_mc = quad.n_mc or DEFAULT_N_MC
        std = half_width / quad.space_radius
        z = center + std * rng.standard_normal((n_mc, d))
        log_q = -0.5 * np.sum(((z - center) / std) ** 2, axis=-1) - np.sum(
            np.log(std * math.sqrt(2.0 * math.pi))
        )
        values = f(t, u, x, z) * g(u, s, z, y) * np.exp(-log_q)
        _check_finite(values, "Monte-Carlo space integrand")
        return float(np.mean(values))
    if quad.n_space**d > quad.max_grid_points:
        raise QuadratureBudgetExceeded(
            f"A spatial grid of {quad.n_space}^{d} points exceeds the budget of "
            f"{quad.max_grid_points} points."
        )
    _, xi, xi_weights = _xi_grid(quad.n_space, d)
    z = center + half_width * xi
    values = f(t, u, x, z) * g(u, s, z, y)
    _check_finite(values, "space integrand")
    return float(np.prod(half_width) * np.dot(xi_weights, values))


def convolve_space(
    f: Kernel,
    g: Kernel,
    t: float,
    u: float,
    s: float,
    x: ArrayLike,
    y: ArrayLike,
    quad: QuadConfig,
    spec: DiffusionSpec,
) -> float:
    """
    Inner space integral of the convolution, :math:`\\int f(t,u,x,z) g(u,s,z,y) dz`.

    The grid is centered between the forward flow of ``x`` and the backward flow of ``y`` at
    time ``u`` and covers ``space_radius`` proxy standard deviations around both.
    """
    check_interval(t, u)
    check_interval(u, s)
    x_arr = np.asarray(x, dtype=float).reshape(spec.d)
    y_arr = np.asarray(y, dtype=float).reshape(spec.d)
    forward = _forward_centers(spec, t, x_arr, np.array([u]))[0]
    backward, _ = integrate_flows(spec.drift, u, s, y_arr[None, :])
    center = 0.5 * (forward + backward[0])
    scale = quad.space_radius * math.sqrt(spec.ellipticity_Lambda * max(u - t, s - u))
    half_width = scale + 0.5 * np.abs(forward - backward[0])
    rng = _sampler(quad, spec.d)
    return _space_integral(f, g, t, u, s, x_arr, y_arr, center, half_width, quad, rng)


def convolve(
    f: Kernel,
    g: Kernel,
    t: float,
    s: float,
    x: ArrayLike,
    y: ArrayLike,
    quad: QuadConfig,
    spec: DiffusionSpec,
) -> float:
    """
    Time-space convolution of two kernels.

    .. math::

        (f \\otimes g)(t,s,x,y) = \\int_t^s\\int f(t,u,x,z)g(u,s,z,y)dzdu.

    The time interval is split at its midpoint. On the right half the substitution
    :math:`u = s - (s - m)(1 - w)^{1/p}` absorbs the :math:`(s-u)^{p-1}` singularity of ``g``,
    and on the left half the mirrored substitution absorbs the concentration of ``f`` at ``t``.
    Space integrals use a trapezoidal grid centered at the flow of the concentrated factor, with
    half-width ``space_radius`` proxy standard deviations, or Monte-Carlo importance sampling
    from the matching Gaussian in dimension 3 and above.

    Parameters
    ----------
    f, g : callable
        Kernels called as ``kernel(t, s, x, y)`` with scalar times and point batches of shape
        ``(n, d)``, returning arrays of shape ``(n,)``.
    t, s : float
        Start and terminal times, ``t < s``.
    x, y : array-like
        Starting and terminal points.
    quad : QuadConfig
        Quadrature settings.
    spec : DiffusionSpec
        Model whose flows and ellipticity constant place the space grids.

    Returns
    -------
    float

    Raises
    ------
    QuadratureBudgetExceeded
        If the spatial grid is larger than ``quad.max_grid_points``.
    NonFiniteIntegrand
        If a kernel returns non-finite values.
    """
    check_interval(t, s)
    logger.debug(f"Convolving on [{t}, {s}] with {quad!r}")
    x_arr = np.asarray(x, dtype=float).reshape(spec.d)
    y_arr = np.asarray(y, dtype=float).reshape(spec.d)
    power = quad.power(spec.gamma)
    middle = 0.5 * (t + s)
    left_nodes, left_weights = singular_rule(t, middle, quad.n_time, power, "left")
    right_nodes, right_weights = singular_rule(middle, s, quad.n_time, power, "right")
    left_centers = _forward_centers(spec, t, x_arr, left_nodes)
    right_centers, _ = integrate_flows(
        spec.drift, right_nodes, s, np.repeat(y_arr[None, :], right_nodes.size, axis=0)
    )
    scale = quad.space_radius * math.sqrt(spec.ellipticity_Lambda)
    rng = _sampler(quad, spec.d)
    total = 0.0
    for v, weight, center in zip(left_nodes, left_weights, left_centers):
        half_width = np.full(spec.d, scale * math.sqrt(v - t))
        value = _space_integral(f, g, t, v, s, x_arr, y_arr, center, half_width, quad, rng)
        total += weight * value
    for v, weight, center in zip(right_nodes, right_weights, right_centers):
        half_width = np.full(spec.d, scale * math.sqrt(s - v))
        value = _space_integral(f, g, t, v, s, x_arr, y_arr, center, half_width, quad, rng)
        total += weight * value
    return float(total)


class _Stencil:
    # Cached geometry and kernel weights of one convolution target time.
    def __init__(
        self,
        n_targets: int,
        left_query: Array,
        left_coeff: Array,
        right_query: Array,
        right_coeff: Array,
        left_proxy: Array,
    ):
        self.n_targets = n_targets
        self.left_query = left_query
        self.left_coeff = left_coeff
        self.right_query = right_query
        self.right_coeff = right_coeff
        self.left_proxy = left_proxy


class _SeriesEngine:
    """
    Layered evaluation of the parametrix series for a fixed start ``(t, x)`` and end time ``s``.

    Layer ``r`` is stored on the grid ``(tau, xi)`` as
    :math:`\\Psi_r(\\tau, \\xi) = \\Phi_r(t, u, x, c(u) + h(u)\\xi) h(u)^d`, where
    :math:`\\Phi_r = \\tilde p \\otimes H^r`, ``u = t + (s - t) tau^(1/p)``, ``c(u)`` is the
    forward flow of ``x`` and :math:`h(u) = R\\sqrt{\\Lambda(u - t)}`. Kernel values of every
    target time are computed once and reused by all layers.
    """

    def __init__(self, spec: DiffusionSpec, t: float, s: float, x: ArrayLike, quad: QuadConfig):
        check_interval(t, s)
        self._spec = spec
        self._t = float(t)
        self._s = float(s)
        self._x = np.asarray(x, dtype=float).reshape(spec.d)
        self._quad = quad
        d = spec.d
        self._power = quad.power(spec.gamma)
        self._axis, self._xi, self._xi_weights = _xi_grid(quad.n_space, d)
        self._scale = quad.space_radius * math.sqrt(spec.ellipticity_Lambda)
        self._tau = np.linspace(0.0, 1.0, quad.n_time + 1)
        self._times = self._t + (self._s - self._t) * self._tau ** (1.0 / self._power)
        self._times[-1] = self._s
        self._grid_centers = _forward_centers(spec, self._t, self._x, self._times)
        self._layers: List[Array] = []
        self._interpolators: List[RegularGridInterpolator] = []
        self._grid_stencils: Optional[List[_Stencil]] = None

    @property
    def spec(self) -> DiffusionSpec:
        return self._spec

    def _width(self, v: Array) -> Array:
        return self._scale * np.sqrt(np.maximum(v - self._t, 0.0))

    def _tau_of(self, v: Array) -> Array:
        return ((v - self._t) / (self._s - self._t)) ** self._power

    def _frame(self, k: int) -> Array:
        return self._grid_centers[k] + self._width(self._times[k]) * self._xi

    def _build_stencils(self, targets: Sequence[Tuple[float, Array]]) -> List[_Stencil]:
        spec, quad, t, d = self._spec, self._quad, self._t, self._spec.d
        n_xi = self._xi.shape[0]
        rules = []
        starts, ends, points = [], [], []
        for u, Z in targets:
            middle = 0.5 * (t + u)
            left = singular_rule(t, middle, quad.n_time, self._power, "left")
            right = singular_rule(middle, u, quad.n_time, self._power, "right")
            nodes = np.concatenate([left[0], right[0]])
            rules.append((u, Z, left, right))
            starts.append(np.repeat(nodes, Z.shape[0]))
            ends.append(np.full(nodes.size * Z.shape[0], u))
            points.append(np.tile(Z, (nodes.size, 1)))
        for u, Z, left, right in rules:
            v = left[0]
            starts.append(np.full(v.size * n_xi, t))
            ends.append(np.repeat(v, n_xi))
            frame = self._centers_at(v)[:, None, :] + self._width(v)[:, None, None] * self._xi
            points.append(frame.reshape(-1, d))
        theta, cov = frozen_geometry(
            spec, np.concatenate(starts), np.concatenate(ends), np.concatenate(points), quad.n_quad
        )
        all_nodes = np.concatenate([np.concatenate([r[2][0], r[3][0]]) for r in rules])
        centers = _forward_centers(spec, t, self._x, all_nodes)
        stencils = []
        offset = 0
        center_offset = 0
        proxy_offset = sum(2 * quad.n_time * Z.shape[0] for _, Z, _, _ in rules)
        for u, Z, (vl, wl), (vr, wr) in rules:
            n_z, n_l, n_r = Z.shape[0], vl.size, vr.size
            count = (n_l + n_r) * n_z
            theta_s = theta[offset : offset + count].reshape(n_l + n_r, n_z, d)
            cov_s = cov[offset : offset + count].reshape(n_l + n_r, n_z, d, d)
            offset += count
            c_l = centers[center_offset : center_offset + n_l]
            c_r = centers[center_offset + n_l : center_offset + n_l + n_r]
            center_offset += n_l + n_r

            h_l = self._width(vl)
            W_l = c_l[:, None, :] + h_l[:, None, None] * self._xi
            H_l = kernel_batch(
                spec, vl[:, None, None], W_l[:, :, None, :], theta_s[:n_l, None], cov_s[:n_l, None]
            )
            left_coeff = wl[:, None, None] * self._xi_weights[None, :, None] * H_l
            left_query = np.concatenate(
                [np.broadcast_to(self._tau_of(vl)[:, None, None], (n_l, n_xi, 1)),
                 np.broadcast_to(self._xi, (n_l, n_xi, d))],
                axis=-1,
            ).reshape(-1, d + 1)

            h_r = self._scale * np.sqrt(u - vr)
            W_r = theta_s[n_l:, :, None, :] + h_r[:, None, None, None] * self._xi
            H_r = kernel_batch(
                spec, vr[:, None, None], W_r, theta_s[n_l:, :, None], cov_s[n_l:, :, None]
            )
            h_frame = self._width(vr)
            coords = (W_r - c_r[:, None, None, :]) / h_frame[:, None, None, None]
            tau_r = np.broadcast_to(self._tau_of(vr)[:, None, None, None], (n_r, n_z, n_xi, 1))
            right_query = np.concatenate([tau_r, coords], axis=-1).reshape(-1, d + 1)
            right_coeff = (
                (wr * (h_r / h_frame) ** d)[:, None, None] * self._xi_weights[None, None, :] * H_r
            )

            proxy_count = n_l * n_xi
            theta_p = theta[proxy_offset : proxy_offset + proxy_count]
            cov_p = cov[proxy_offset : proxy_offset + proxy_count]
            proxy_offset += proxy_count
            density, _, _ = gaussian_terms(theta_p - self._x, cov_p)
            left_proxy = density.reshape(n_l, n_xi) * (h_l**d)[:, None]

            _check_finite(left_coeff, "parametrix kernel")
            _check_finite(right_coeff, "parametrix kernel")
            stencils.append(
                _Stencil(n_z, left_query, left_coeff, right_query, right_coeff, left_proxy)
            )
        logger.debug(f"Built {len(stencils)} convolution stencils for '{spec.name}'")
        return stencils

    def _centers_at(self, v: Array) -> Array:
        return _forward_centers(self._spec, self._t, self._x, v)

    def _apply(self, stencil: _Stencil, layer: int) -> Array:
        n_l, n_xi, n_z = stencil.left_coeff.shape
        if layer == 0:
            left = stencil.left_proxy
        else:
            left = self._interpolators[layer](stencil.left_query).reshape(n_l, n_xi)
        right = self._interpolators[layer](stencil.right_query).reshape(stencil.right_coeff.shape)
        return np.einsum("vi,vij->j", left, stencil.left_coeff) + np.einsum(
            "vji,vji->j", right, stencil.right_coeff
        )

    def _add_layer(self, values: Array) -> None:
        d = self._spec.d
        grid = values.reshape((self._tau.size,) + (self._axis.size,) * d)
        self._layers.append(values)
        self._interpolators.append(
            RegularGridInterpolator(
                (self._tau,) + (self._axis,) * d,
                grid,
                method="linear",
                bounds_error=False,
                fill_value=0.0,
            )
        )

    def _materialize_proxy_layer(self) -> None:
        spec, d = self._spec, self._spec.d
        n_xi = self._xi.shape[0]
        times = self._times[1:]
        frames = np.concatenate([self._frame(k) for k in range(1, self._times.size)])
        theta, cov = frozen_geometry(
            spec, self._t, np.repeat(times, n_xi), frames, self._quad.n_quad
        )
        density, _, _ = gaussian_terms(theta - self._x, cov)
        values = np.empty((self._times.size, n_xi))
        values[1:] = density.reshape(times.size, n_xi) * (self._width(times) ** d)[:, None]
        limit_cov = spec.a(self._t, self._x) / self._scale**2
        values[0], _, _ = gaussian_terms(-self._xi, np.broadcast_to(limit_cov, (n_xi, d, d)))
        self._add_layer(values)

    def materialize(self, order: int) -> None:
        """Materialize layers ``0`` to ``order - 1`` on the grid."""
        if order <= 0 or len(self._layers) >= order:
            return
        if not self._layers:
            self._materialize_proxy_layer()
        if order > 1 and self._grid_stencils is None:
            stencil_entries = 2 * self._quad.n_time**2 * self._xi.shape[0] ** 2
            if stencil_entries > self._quad.max_grid_points:
                raise QuadratureBudgetExceeded(
                    f"The layer grid needs {stencil_entries} kernel values, more than the budget "
                    f"of {self._quad.max_grid_points}. Reduce n_space or n_time."
                )
            targets = [(self._times[k], self._frame(k)) for k in range(1, self._times.size)]
            self._grid_stencils = self._build_stencils(targets)
        while len(self._layers) < order:
            layer = len(self._layers) - 1
            values = np.zeros_like(self._layers[0])
            assert self._grid_stencils is not None
            for k, stencil in enumerate(self._grid_stencils, start=1):
                jacobian = self._width(self._times[k]) ** self._spec.d
                values[k] = self._apply(stencil, layer) * jacobian
            logger.debug(f"Materialized parametrix layer {layer + 1} of '{self._spec.name}'")
            self._add_layer(values)

    def layer_values(self, layer: int, v: float, z: Array) -> Array:
        """Values of :math:`\\tilde p \\otimes H^r` at time ``v`` for points ``z``."""
        z_arr = np.asarray(z, dtype=float).reshape(-1, self._spec.d)
        if layer == 0:
            return ProxyKernel(self._spec, self._quad.n_quad)(self._t, v, self._x, z_arr)
        self.materialize(layer + 1)
        width = self._width(np.array([v]))[0]
        center = self._centers_at(np.array([v]))[0]
        tau = np.full((z_arr.shape[0], 1), self._tau_of(np.array([v]))[0])
        query = np.concatenate([tau, (z_arr - center) / width], axis=-1)
        return self._interpolators[layer](query) / width**self._spec.d

    def terms(self, ys: Array, order: int) -> Array:
        """Series terms ``0..order`` at the terminal points ``ys``, shape ``(order + 1, n)``."""
        ys = np.asarray(ys, dtype=float).reshape(-1, self._spec.d)
        result = np.empty((order + 1, ys.shape[0]))
        result[0] = ProxyKernel(self._spec, self._quad.n_quad)(self._t, self._s, self._x, ys)
        if order == 0:
            return result
        self.materialize(order)
        (final,) = self._build_stencils([(self._s, ys)])
        for r in range(1, order + 1):
            result[r] = self._apply(final, r - 1)
        return result


class SeriesApprox:
    """
    Truncated parametrix series at one point ``(t, s, x, y)``.

    Read-only. Build instances with :func:`series_density`.
    """

    def __init__(
        self,
        point: Tuple[float, float, Array, Array],
        terms: Sequence[float],
        tail_bound: float,
        fitted_C: float,
        majorant: float,
        gamma: float,
        quad: QuadConfig,
    ):
        self._point = point
        self._terms = tuple(float(term) for term in terms)
        self._total = sum(self._terms)
        self._tail_bound = tail_bound
        self._fitted_C = fitted_C
        self._majorant = majorant
        self._gamma = gamma
        self._quad = quad

    @property
    def point(self) -> Tuple[float, float, Array, Array]:
        """Evaluation point ``(t, s, x, y)``."""
        return self._point

    @property
    def terms(self) -> Tuple[float, ...]:
        """Series terms :math:`\\tilde p, \\tilde p\\otimes H, \\dots, \\tilde p\\otimes H^N`."""
        return self._terms

    @property
    def order(self) -> int:
        """Truncation order ``N``."""
        return len(self._terms) - 1

    @property
    def total(self) -> float:
        """Sum of the terms."""
        return self._total

    @property
    def tail_bound(self) -> float:
        """Bound on the sum of the omitted terms."""
        return self._tail_bound

    @property
    def fitted_C(self) -> float:
        """Constant of the term bound, fitted at the first convolution order."""
        return self._fitted_C

    @property
    def majorant(self) -> float:
        """Majorant :math:`\\bar p(t,s,x,y)` the bounds are relative to."""
        return self._majorant

    @property
    def quad(self) -> QuadConfig:
        """Quadrature settings used."""
        return self._quad

    @property
    def flagged(self) -> bool:
        """Whether the total is negative beyond the truncation tolerance."""
        return self._total < -NEGATIVE_TOTAL_TOLERANCE

    def term_bound(self, order: int) -> float:
        """Bound on the term of the given order implied by the fitted constant."""
        t, s, _, _ = self._point
        return _term_bound_factor(self._fitted_C, order, self._gamma, s - t) * self._majorant

    def __repr__(self) -> str:
        """Printable representation of the object."""
        return f"<{self.__class__.__name__} order: {self.order}, total: {self._total:.6g}>"


def _term_bound_factor(constant: float, order: int, gamma: float, span: float) -> float:
    if constant <= 0.0:
        return 0.0
    half = gamma / 2.0
    log_value = (
        (order + 1) * math.log(constant)
        + order * log_gamma(half)
        + order * half * math.log(span)
        - log_gamma(1.0 + order * half)
    )
    return math.exp(min(log_value, 700.0))


def fit_term_constant(term: float, order: int, gamma: float, span: float, majorant: float) -> float:
    """Smallest constant ``C`` for which the term bound of the given order holds for ``term``."""
    if majorant <= 0.0 or term == 0.0:
        return 0.0
    half = gamma / 2.0
    ratio = abs(term) / majorant
    factor = gamma_fn(half) ** order * span ** (order * half) / gamma_fn(1.0 + order * half)
    return (ratio / factor) ** (1.0 / (order + 1))


def tail_bound(constant: float, order: int, gamma: float, span: float, majorant: float) -> float:
    """Bound on the sum of the series terms of order above ``order``."""
    total = 0.0
    for r in range(order + 1, order + 1 + TAIL_MAX_TERMS):
        term = _term_bound_factor(constant, r, gamma, span)
        total += term
        if term <= 1e-17 * max(total, 1e-300):
            break
    return total * majorant


def series_terms(
    spec: DiffusionSpec,
    t: float,
    s: float,
    x: ArrayLike,
    ys: ArrayLike,
    N: int = DEFAULT_ORDER,
    quad: Optional[QuadConfig] = None,
) -> Array:
    """
    Raw series terms at several terminal points, shape ``(N + 1, n)``.

    Row ``r`` holds :math:`\\tilde p \\otimes H^r(t, s, x, y_j)`.
    """
    check_interval(t, s)
    if N < 0:
        raise InvalidParam(f"Truncation order must be nonnegative, got {N}.")
    engine = _SeriesEngine(spec, t, s, x, quad or QuadConfig())
    return engine.terms(np.asarray(ys, dtype=float).reshape(-1, spec.d), N)


def series_density_grid(
    spec: DiffusionSpec,
    t: float,
    s: float,
    x: ArrayLike,
    ys: ArrayLike,
    N: int = DEFAULT_ORDER,
    quad: Optional[QuadConfig] = None,
    majorant: Optional[MajorantParams] = None,
) -> List[SeriesApprox]:
    """
    Truncated parametrix series at several terminal points sharing one start ``(t, x)``.

    The layer grids are built once and reused for every terminal point. See
    :func:`series_density` for the parameters.
    """
    check_interval(t, s)
    if N < 0:
        raise InvalidParam(f"Truncation order must be nonnegative, got {N}.")
    quad = quad or QuadConfig()
    majorant = majorant or MajorantParams.for_spec(spec)
    x_arr = np.asarray(x, dtype=float).reshape(spec.d)
    ys_arr = np.asarray(ys, dtype=float).reshape(-1, spec.d)
    logger.info(
        f"Evaluating the order-{N} parametrix series of '{spec.name}' on [{t}, {s}] at "
        f"{ys_arr.shape[0]} point(s)"
    )
    terms = series_terms(spec, t, s, x_arr, ys_arr, N, quad)
    bars = majorant_batch(majorant, spec, t, s, x_arr[None, :], ys_arr)
    span = s - t
    if N >= 1:
        constants = [
            fit_term_constant(term, 1, spec.gamma, span, bar) for term, bar in zip(terms[1], bars)
        ]
    else:
        kernel = KernelH(spec, quad.n_quad)
        kernel_values = np.array([kernel(t, s, x_arr, y)[0] for y in ys_arr])
        constants = [
            abs(h) * span ** (1.0 - spec.gamma / 2.0) / bar if bar > 0.0 else 0.0
            for h, bar in zip(kernel_values, bars)
        ]
    approxes = []
    for j, y in enumerate(ys_arr):
        approx = SeriesApprox(
            (float(t), float(s), x_arr.copy(), y.copy()),
            terms[:, j],
            tail_bound(constants[j], N, spec.gamma, span, bars[j]),
            constants[j],
            float(bars[j]),
            spec.gamma,
            quad,
        )
        if approx.flagged:
            logger.warning(f"Parametrix series total {approx.total:.3g} is negative at y={y}")
        approxes.append(approx)
    logger.debug(f"Fitted term constants range [{min(constants):.3g}, {max(constants):.3g}]")
    return approxes


def series_density(
    spec: DiffusionSpec,
    t: float,
    s: float,
    x: ArrayLike,
    y: ArrayLike,
    N: int = DEFAULT_ORDER,
    quad: Optional[QuadConfig] = None,
    majorant: Optional[MajorantParams] = None,
) -> SeriesApprox:
    """
    Approximate the transition density by the truncated parametrix series.

    Computes :math:`\\tilde p + \\sum_{r=1}^N \\tilde p \\otimes H^r` at ``(t, s, x, y)``. Each
    term is materialized on a grid of times and proxy-scaled space points and interpolated
    multilinearly by the next layer, so the cost is linear in ``N``. The tail bound uses the
    constant fitted from the first convolution term, or from the kernel itself when ``N = 0``.

    Parameters
    ----------
    spec : DiffusionSpec
        Model.
    t, s : float
        Start and terminal times, ``t < s``.
    x, y : array-like
        Starting and terminal points.
    N : int, default 4
        Truncation order.
    quad : QuadConfig, optional
        Quadrature settings. Defaults to ``QuadConfig()``.
    majorant : MajorantParams, optional
        Majorant used by the bounds. Defaults to ``MajorantParams.for_spec(spec)``.

    Returns
    -------
    SeriesApprox

    Raises
    ------
    DegenerateInterval
        If ``t >= s``.
    QuadratureBudgetExceeded
        If the layer grid needs more kernel values than ``quad.max_grid_points``.

    Examples
    --------
    >>> heat = builtin_model("heat", {"d": 1})
    >>> series_density(heat, 0.0, 1.0, [0.0], [0.0], N=2).terms
    (0.3989422804014327, 0.0, 0.0)
    """
    return series_density_grid(spec, t, s, x, [y], N, quad, majorant)[0]


class LayerKernel:
    """
    Series layer :math:`\\tilde p \\otimes H^r` from a fixed start ``(t, x)``.

    Used as the left factor of a convolution.

    The kernel is only defined for the start it was built with. The layer grid covers
    ``[t, s]``.
    """

    def __init__(
        self,
        spec: DiffusionSpec,
        t: float,
        s: float,
        x: ArrayLike,
        order: int,
        quad: Optional[QuadConfig] = None,
    ):
        if order < 0:
            raise InvalidParam(f"Layer order must be nonnegative, got {order}.")
        self._engine = _SeriesEngine(spec, t, s, x, quad or QuadConfig())
        self._order = order

    def __call__(self, t: float, v: float, x: ArrayLike, z: ArrayLike) -> Array:
        return self._engine.layer_values(self._order, v, np.asarray(z, dtype=float))
