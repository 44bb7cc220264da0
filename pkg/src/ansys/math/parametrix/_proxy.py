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

"""Flow-frozen Gaussian proxy and the Gaussian majorant."""

from functools import lru_cache
import math
from typing import Optional, Sequence, Tuple

import numpy as np
from numpy.typing import ArrayLike, NDArray

from ._exceptions import (
    DegenerateInterval,
    DimensionMismatch,
    InvalidParam,
    NonSPD,
    UnsupportedOrder,
)
from ._flow import integrate_flows, linear_moments
from ._logger import logger
from ._models import DiffusionSpec
from ._special import legendre_reference

DEFAULT_N_QUAD = 16
MIN_N_QUAD = 8
MAX_DERIVATIVE_ORDER = 4
EIGENVALUE_TOLERANCE = 1e-6
DEFAULT_MAJORANT_SCALE = 4.0

Array = NDArray[np.float64]


def check_interval(t: float, s: float) -> None:
    if not t < s:
        raise DegenerateInterval(t, s)


def frozen_geometry(
    spec: DiffusionSpec, t: ArrayLike, s: ArrayLike, y: ArrayLike, n_quad: int = DEFAULT_N_QUAD
) -> Tuple[Array, Array]:
    """
    Backward flow end points and frozen covariances for a batch of terminal points.

    Parameters
    ----------
    spec : DiffusionSpec
        Model.
    t, s : array-like
        Start and terminal times, broadcastable to ``(n,)``, with ``t < s``.
    y : array-like
        Terminal points, shape ``(n, d)``.
    n_quad : int
        Number of Gauss-Legendre nodes along each flow.

    Returns
    -------
    tuple of numpy.ndarray
        :math:`\\theta_{t,s}(y)` with shape ``(n, d)`` and
        :math:`\\int_t^s a(u, \\theta_{u,s}(y)) du` with shape ``(n, d, d)``.
    """
    y_arr = np.atleast_2d(np.asarray(y, dtype=float))
    n = y_arr.shape[0]
    t_arr = np.broadcast_to(np.asarray(t, dtype=float), (n,))
    s_arr = np.broadcast_to(np.asarray(s, dtype=float), (n,))
    reference_nodes, reference_weights = legendre_reference(n_quad)
    half = 0.5 * (s_arr - t_arr)
    nodes = t_arr[:, None] + half[:, None] * (reference_nodes + 1.0)
    weights = half[:, None] * reference_weights
    theta, path = integrate_flows(spec.drift, t_arr, s_arr, y_arr, record=nodes)
    assert path is not None
    a = spec.a(nodes, path)
    cov = np.einsum("nq,nqij->nij", weights, a)
    return theta, 0.5 * (cov + np.swapaxes(cov, -1, -2))


def gaussian_terms(offset: Array, cov: Array) -> Tuple[Array, Array, Array]:
    """
    Gaussian density of ``offset`` under ``N(0, cov)`` and the ingredients of its derivatives.

    Returns the density, ``u = cov^{-1} offset`` and ``cov^{-1}``.

    Raises
    ------
    NonSPD
        If a covariance is not positive definite.
    """
    d = offset.shape[-1]
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as e:
        raise NonSPD("Proxy covariance is not positive definite.") from e
    precision = np.linalg.inv(cov)
    u = np.einsum("...ij,...j->...i", precision, offset)
    quadratic = np.einsum("...i,...i->...", offset, u)
    log_det = 2.0 * np.sum(np.log(np.diagonal(chol, axis1=-2, axis2=-1)), axis=-1)
    density = np.exp(-0.5 * quadratic - 0.5 * log_det - 0.5 * d * math.log(2.0 * math.pi))
    return density, u, precision


def derivative_factor(u: Array, precision: Array, index: Tuple[int, ...]) -> Array:
    """
    Hermite-type polynomial ``P`` such that
    :math:`\\partial_{x_{i_1}} \\dots \\partial_{x_{i_k}} g = P g`.

    ``g`` is the Gaussian density of :func:`gaussian_terms` seen as a function of the starting
    point ``x``, ``u = cov^{-1}(theta - x)``.
    """
    if not index:
        return np.ones(u.shape[:-1])
    first, rest = index[0], index[1:]
    value = u[..., first] * derivative_factor(u, precision, rest)
    for m, other in enumerate(rest):
        value = value - precision[..., first, other] * derivative_factor(
            u, precision, rest[:m] + rest[m + 1 :]
        )
    return value


@lru_cache(maxsize=None)
def multi_index_to_axes(nu: Tuple[int, ...]) -> Tuple[int, ...]:
    """Expand a multi-index such as ``(2, 1)`` into the axis list ``(0, 0, 1)``."""
    return tuple(axis for axis, count in enumerate(nu) for _ in range(count))


def _check_spd(cov: Array, span: float, Lambda: float) -> None:
    eigenvalues = np.linalg.eigvalsh(cov)
    lower = span / Lambda * (1.0 - EIGENVALUE_TOLERANCE)
    upper = span * Lambda * (1.0 + EIGENVALUE_TOLERANCE)
    if eigenvalues.min() < lower or eigenvalues.max() > upper:
        raise NonSPD(
            f"Proxy covariance eigenvalues [{eigenvalues.min()}, {eigenvalues.max()}] are outside "
            f"[{lower}, {upper}]."
        )


class ProxyMoments:
    """
    Moments of the Gaussian proxy frozen along the flow ending at ``(s, y)``.

    Read-only. Build instances with :func:`proxy_moments`.
    """

    def __init__(self, t: float, s: float, x: Array, y: Array, theta: Array, cov: Array):
        self._t = t
        self._s = s
        self._x = x
        self._y = y
        self._theta = theta
        self._cov = cov
        for array in (self._x, self._y, self._theta, self._cov):
            array.setflags(write=False)

    @property
    def span(self) -> Tuple[float, float]:
        """Time interval ``(t, s)``."""
        return self._t, self._s

    @property
    def frozen_at(self) -> Tuple[float, Array]:
        """Terminal point ``(s, y)`` along whose flow the coefficients are frozen."""
        return self._s, self._y

    @property
    def theta(self) -> Array:
        """Backward flow value :math:`\\theta_{t,s}(y)`."""
        return self._theta

    @property
    def shift(self) -> Array:
        """Mean shift ``y - theta``, independent of the starting point."""
        return self._y - self._theta

    @property
    def mean(self) -> Array:
        """Proxy mean ``x + y - theta`` for the starting point the moments were computed at."""
        return self._x + self.shift

    @property
    def cov(self) -> Array:
        """Covariance :math:`\\int_t^s a(u, \\theta_{u,s}(y)) du`."""
        return self._cov

    def offset(self, x: ArrayLike, y: ArrayLike) -> Array:
        """``y - mean(x)``, which equals ``theta - x`` at the frozen terminal point."""
        return np.asarray(y, dtype=float) - np.asarray(x, dtype=float) - self.shift

    def __repr__(self) -> str:
        """Printable representation of the object."""
        return f"<{self.__class__.__name__} span: ({self._t}, {self._s})>"


def _point(value: ArrayLike, dimension: int) -> Array:
    arr = np.asarray(value, dtype=float).reshape(-1)
    if arr.shape != (dimension,):
        raise DimensionMismatch(f"Expected a point of dimension {dimension}, got {arr.shape}.")
    return arr


def proxy_moments(
    spec: DiffusionSpec,
    t: float,
    s: float,
    x: ArrayLike,
    y: ArrayLike,
    n_quad: int = DEFAULT_N_QUAD,
) -> ProxyMoments:
    """
    Compute the moments of the flow-frozen Gaussian proxy.

    The covariance :math:`\\int_t^s a(u, \\theta_{u,s}(y)) du` is computed by Gauss-Legendre
    quadrature along a single flow path.

    Parameters
    ----------
    spec : DiffusionSpec
        Model.
    t, s : float
        Start and terminal times, ``t < s``.
    x, y : array-like
        Starting and terminal points.
    n_quad : int, default 16
        Number of quadrature nodes, at least 8.

    Returns
    -------
    ProxyMoments

    Raises
    ------
    DegenerateInterval
        If ``t >= s``.
    NonSPD
        If the covariance eigenvalues violate the ellipticity bounds.
    """
    check_interval(t, s)
    if n_quad < MIN_N_QUAD:
        raise InvalidParam(f"n_quad must be at least {MIN_N_QUAD}, got {n_quad}.")
    x_arr = _point(x, spec.d)
    y_arr = _point(y, spec.d)
    theta, cov = frozen_geometry(spec, t, s, y_arr[None, :], n_quad)
    _check_spd(cov[0], s - t, spec.ellipticity_Lambda)
    return ProxyMoments(float(t), float(s), x_arr, y_arr, theta[0], cov[0])


def proxy_density(moments: ProxyMoments, x: ArrayLike, y: ArrayLike) -> float:
    """
    Evaluate the proxy density :math:`\\tilde p(t,s,x,y)`.

    This is the density at ``y`` of ``N(mean(x), cov)``, that is

    .. math::

        (2\\pi)^{-d/2}\\det(C)^{-1/2}\\exp(-\\langle C^{-1}(\\theta - x), \\theta - x\\rangle/2).

    Raises
    ------
    NonSPD
        If the covariance is not positive definite.
    """
    density, _, _ = gaussian_terms(moments.offset(x, y), moments.cov)
    return float(density)


def proxy_derivative(
    moments: ProxyMoments, x: ArrayLike, y: ArrayLike, nu: Sequence[int]
) -> float:
    """
    Spatial derivative :math:`\\partial^\\nu_x \\tilde p(t,s,x,y)` in the starting point.

    Parameters
    ----------
    moments : ProxyMoments
        Proxy moments.
    x, y : array-like
        Starting and terminal points.
    nu : sequence of int
        Multi-index with one nonnegative order per axis, total order at most 4.

    Returns
    -------
    float

    Raises
    ------
    UnsupportedOrder
        If the total order exceeds 4.
    """
    nu_tuple = tuple(int(k) for k in nu)
    if len(nu_tuple) != moments.theta.shape[0] or min(nu_tuple, default=0) < 0:
        raise DimensionMismatch(
            f"Invalid multi-index {nu_tuple} for dimension {moments.theta.shape[0]}."
        )
    if sum(nu_tuple) > MAX_DERIVATIVE_ORDER:
        raise UnsupportedOrder(
            f"Derivatives of order {sum(nu_tuple)} are not supported, the maximum is "
            f"{MAX_DERIVATIVE_ORDER}."
        )
    density, u, precision = gaussian_terms(moments.offset(x, y), moments.cov)
    return float(density * derivative_factor(u, precision, multi_index_to_axes(nu_tuple)))


class MajorantParams:
    """
    Parameters of the Gaussian majorant :math:`\\bar p`.

    Parameters
    ----------
    lam : float
        Diffusion level of the auxiliary process :math:`d\\bar X = b dt + \\lambda dW`.
    c_gauss : float, optional
        Exponent constant, at least ``2 lam**2``. Defaults to ``2 lam**2``, which makes the
        majorant a normalized Gaussian density.
    c_front : float, default 1.0
        Prefactor.
    """

    def __init__(self, lam: float, c_gauss: Optional[float] = None, c_front: float = 1.0):
        if not lam > 0.0:
            raise InvalidParam(f"Majorant diffusion level must be positive, got {lam}.")
        c_gauss = 2.0 * lam**2 if c_gauss is None else float(c_gauss)
        if c_gauss < 2.0 * lam**2 * (1.0 - 1e-12):
            raise InvalidParam(
                f"c_gauss must be at least 2*lam**2 = {2.0 * lam**2}, got {c_gauss}."
            )
        if not c_front > 0.0:
            raise InvalidParam(f"c_front must be positive, got {c_front}.")
        self._lam = float(lam)
        self._c_gauss = c_gauss
        self._c_front = float(c_front)

    @classmethod
    def for_spec(
        cls, spec: DiffusionSpec, scale: float = DEFAULT_MAJORANT_SCALE
    ) -> "MajorantParams":
        """Default majorant with ``lam**2 = scale * Lambda``."""
        return cls(math.sqrt(scale * spec.ellipticity_Lambda))

    @property
    def lam(self) -> float:
        """Diffusion level."""
        return self._lam

    @property
    def c_gauss(self) -> float:
        """Exponent constant."""
        return self._c_gauss

    @property
    def c_front(self) -> float:
        """Prefactor."""
        return self._c_front

    def __repr__(self) -> str:
        """Printable representation of the object."""
        return f"<{self.__class__.__name__} lam: {self._lam}>"


def majorant_batch(
    params: MajorantParams, spec: DiffusionSpec, t: float, s: float, x: ArrayLike, y: ArrayLike
) -> Array:
    """
    Vectorized :func:`majorant_density` for starting points ``x`` and terminal points ``y``.

    ``x`` and ``y`` have shape ``(n, d)`` or broadcast against each other.
    """
    check_interval(t, s)
    if params.lam**2 < spec.ellipticity_Lambda * (1.0 - 1e-12):
        raise InvalidParam(
            f"Majorant level lam**2 = {params.lam**2} is below the ellipticity constant "
            f"{spec.ellipticity_Lambda}."
        )
    x_arr = np.atleast_2d(np.asarray(x, dtype=float))
    y_arr = np.atleast_2d(np.asarray(y, dtype=float))
    x_arr, y_arr = np.broadcast_arrays(x_arr, y_arr)
    d = spec.d
    scale = params.c_gauss / (2.0 * params.lam**2)
    if spec.drift_matrix is not None:
        resolvent, cov = linear_moments(spec.drift_matrix, params.lam * np.eye(d), t, s)
        offset = y_arr - x_arr @ resolvent.T
        cov_b = np.broadcast_to(cov * scale, offset.shape[:-1] + (d, d))
        density, _, _ = gaussian_terms(offset, cov_b)
        return params.c_front * density
    theta, _ = integrate_flows(spec.drift, t, s, y_arr.reshape(-1, d))
    distance2 = np.sum((theta.reshape(y_arr.shape) - x_arr) ** 2, axis=-1)
    span = s - t
    return (
        params.c_front
        * (math.pi * params.c_gauss * span) ** (-0.5 * d)
        * np.exp(-distance2 / (params.c_gauss * span))
    )


def majorant_density(
    params: MajorantParams, spec: DiffusionSpec, t: float, s: float, x: ArrayLike, y: ArrayLike
) -> float:
    """
    Evaluate the Gaussian majorant :math:`\\bar p(t,s,x,y)`.

    For nonlinear drift this is the surrogate
    :math:`c_f (\\pi C_p (s-t))^{-d/2}\\exp(-|\\theta_{t,s}(y) - x|^2 / (C_p (s-t)))`. For an
    exactly linear drift ``G(u) x`` it is the exact Gaussian density of the auxiliary process,
    with mean ``R(s,t) x`` and covariance :math:`\\lambda^2\\int_t^s R(s,u)R(s,u)^T du`.

    Raises
    ------
    DegenerateInterval
        If ``t >= s``.
    InvalidParam
        If ``lam**2`` is below the ellipticity constant of the model.
    """
    x_arr = _point(x, spec.d)
    y_arr = _point(y, spec.d)
    return float(majorant_batch(params, spec, t, s, x_arr[None, :], y_arr[None, :])[0])


def proxy_batch(
    spec: DiffusionSpec,
    t: float,
    s: ArrayLike,
    x: ArrayLike,
    y: ArrayLike,
    n_quad: int = DEFAULT_N_QUAD,
) -> Array:
    """Vectorized proxy density over matching batches of terminal times and points."""
    y_arr = np.atleast_2d(np.asarray(y, dtype=float))
    theta, cov = frozen_geometry(spec, t, s, y_arr, n_quad)
    density, _, _ = gaussian_terms(theta - np.asarray(x, dtype=float), cov)
    logger.debug(f"Evaluated {density.size} proxy densities of '{spec.name}'")
    return density
