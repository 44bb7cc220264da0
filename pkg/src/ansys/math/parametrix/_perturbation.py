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

"""Perturbation functionals, stability bounds and numerical lemma verifiers."""

from itertools import combinations_with_replacement
import math
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from numpy.typing import ArrayLike, NDArray

from ._exceptions import (
    DimensionMismatch,
    EmptyComparisons,
    EmptyGrid,
    InvalidParam,
    OutOfInterval,
)
from ._flow import integrate_flows
from ._grid import DEFAULT_THREADS, _GridEvaluator
from ._logger import logger
from ._models import DiffusionSpec, builtin_model
from ._parametrix import (
    KernelH,
    LayerKernel,
    QuadConfig,
    _xi_grid,
    convolve,
    kernel_H,
    series_terms,
)
from ._proxy import MajorantParams, check_interval, majorant_batch, proxy_derivative, proxy_moments
from ._special import beta_fn, beta_rule, composite_gauss_legendre, gamma_fn

COMPARISON_SEED = 0x5EED
DEFAULT_COMPARISON_COUNT = 64
COMPARISON_LEVELS = 6
DEFAULT_N_SAMPLES = 50
DEFAULT_TIME_CELLS = 10
DEFAULT_SUP_TIMES = 21
DEFAULT_SUP_SPACE = 41
DEFAULT_BOX = 5.0
FLOW_PANEL = 0.05
FLOW_PANEL_NODES = 8
DEFAULT_LEMMA_ORDERS = (0, 1, 2)
DEFAULT_DIAGONAL_OFFSETS = (0.5, 1.0, 1.5, 2.0)
BOUND_TOLERANCE = 1e-12

LEMMAS = (
    "main_terms",
    "kernels",
    "first_conv",
    "nconv_mixed",
    "linf_main_terms",
    "linf_kernels",
    "linf_nconv",
)

CSV_FIELDS = (
    "t",
    "s",
    "eps",
    "delta_b",
    "delta_sigma",
    "M",
    "Mbar",
    "MC",
    "MbarC",
    "lhs",
    "rhs",
    "fittedC",
    "passed",
)

Array = NDArray[np.float64]
Field = Callable[[ArrayLike, ArrayLike], Array]
Cell = Tuple[float, float]


def comparison_cloud(
    d: int, n: int = DEFAULT_COMPARISON_COUNT, seed: int = COMPARISON_SEED
) -> Array:
    """
    Fixed comparison offsets for local seminorms.

    Offsets have random directions and radii cycling through ``1, 1/2, ..., 1/32``.
    """
    rng = np.random.Generator(np.random.Philox(key=seed))
    directions = rng.standard_normal((n, d))
    directions /= np.linalg.norm(directions, axis=-1, keepdims=True)
    radii = 2.0 ** -(np.arange(n) % COMPARISON_LEVELS)
    return directions * radii[:, None]


def _point_norm(values: Array, lead: int) -> Array:
    return np.linalg.norm(values.reshape(values.shape[:lead] + (-1,)), axis=-1)


def seminorm_values(f: Field, t: ArrayLike, X: ArrayLike, beta: float, offsets: Array) -> Array:
    """
    Vectorized local seminorm :math:`|f(t,x)|_\\beta` at the comparison points ``x + offsets``.

    ``t`` broadcasts against ``X[..., 0]``. Returns an array with the leading shape of ``X``.
    """
    points = np.asarray(X, dtype=float)
    lead = points.shape[:-1]
    times = np.broadcast_to(np.asarray(t, dtype=float), lead)
    center = f(times, points)
    shifted = f(times[..., None], points[..., None, :] + offsets)
    differences = np.expand_dims(center, len(lead)) - shifted
    ratios = _point_norm(differences, len(lead) + 1) / np.linalg.norm(offsets, axis=-1) ** beta
    return _point_norm(center, len(lead)) + ratios.max(axis=-1)


def norm_values(f: Field, t: ArrayLike, X: ArrayLike) -> Array:
    """Vectorized Euclidean or Frobenius norm :math:`|f(t,x)|`."""
    points = np.asarray(X, dtype=float)
    lead = points.shape[:-1]
    return _point_norm(f(np.broadcast_to(np.asarray(t, dtype=float), lead), points), len(lead))


def local_seminorm(
    f: Field, t: float, x: ArrayLike, beta: float, comparisons: ArrayLike
) -> float:
    """
    Finite-sample estimate of the local Hölder seminorm.

    Returns :math:`|f(t,x)| + \\max_y |f(t,x) - f(t,y)| / |x - y|^\\beta` over the
    comparison points ``y``.

    Parameters
    ----------
    f : callable
        Vectorized map ``f(t, x)`` with ``x`` of shape ``(..., d)``.
    t : float
        Time.
    x : array-like
        Evaluation point of shape ``(d,)``.
    beta : float
        Hölder exponent.
    comparisons : array-like
        Comparison points of shape ``(m, d)``. Points equal to ``x`` are ignored.

    Returns
    -------
    float

    Raises
    ------
    EmptyComparisons
        If no comparison point differs from ``x``.
    """
    x_arr = np.asarray(x, dtype=float).reshape(-1)
    offsets = np.asarray(comparisons, dtype=float).reshape(-1, x_arr.size) - x_arr
    offsets = offsets[np.linalg.norm(offsets, axis=-1) > 0.0]
    if offsets.shape[0] == 0:
        raise EmptyComparisons("At least one comparison point different from x is required.")
    return float(seminorm_values(f, t, x_arr[None, :], beta, offsets)[0])


def beta_weight(u: float, t: float, s: float, a: float, b: float) -> float:
    """
    Beta density on ``[t, s]``, :math:`(u-t)^{a-1}(s-u)^{b-1}(s-t)^{1-a-b}/B(a,b)`.

    Raises
    ------
    OutOfInterval
        If ``u`` is not in ``[t, s]``.
    NonPositiveArgument
        If ``a`` or ``b`` is not positive.
    """
    check_interval(t, s)
    if not t <= u <= s:
        raise OutOfInterval(f"u={u} is outside [{t}, {s}].")
    normalization = beta_fn(a, b)
    with np.errstate(divide="ignore"):
        value = (
            np.power(u - t, a - 1.0) * np.power(s - u, b - 1.0) * (s - t) ** (1.0 - a - b)
        )
    return float(value / normalization)


class PerturbationPair:
    """
    A diffusion and its perturbation, with the parameters of the stability bounds.

    Parameters
    ----------
    base, perturbed : DiffusionSpec
        Original and perturbed models, with equal dimension and Hölder exponent.
    epsilon : float
        Perturbation label, positive.
    delta : float, optional
        Exponent in ``(gamma/2, gamma)``. Defaults to ``3 gamma / 4``.
    alpha : float, optional
        Split between diagonal and off-diagonal maxima. Defaults to ``sqrt(epsilon)``.
    mu : sequence of (point, weight), optional
        Discrete starting measure. Defaults to the Dirac mass at ``(1, ..., 1)``.
    majorant : MajorantParams, optional
        Majorant. Defaults to ``lam**2 = 4 Lambda`` with the larger ellipticity constant of the
        two models.

    Raises
    ------
    InvalidParam
        If a parameter is out of range or the models have different Hölder exponents.
    DimensionMismatch
        If the models have different dimensions.
    """

    def __init__(
        self,
        base: DiffusionSpec,
        perturbed: DiffusionSpec,
        epsilon: float,
        delta: Optional[float] = None,
        alpha: Optional[float] = None,
        mu: Optional[Sequence[Tuple[ArrayLike, float]]] = None,
        majorant: Optional[MajorantParams] = None,
    ):
        if base.d != perturbed.d:
            raise DimensionMismatch(
                f"Models have different dimensions, {base.d} and {perturbed.d}."
            )
        if base.gamma != perturbed.gamma:
            raise InvalidParam(
                f"Models have different Hölder exponents, {base.gamma} and {perturbed.gamma}."
            )
        if not epsilon > 0.0:
            raise InvalidParam(f"epsilon must be positive, got {epsilon}.")
        gamma = base.gamma
        delta = 0.75 * gamma if delta is None else float(delta)
        if not gamma / 2.0 < delta < gamma:
            raise InvalidParam(f"delta must be in ({gamma / 2.0}, {gamma}), got {delta}.")
        alpha = math.sqrt(epsilon) if alpha is None else float(alpha)
        if not alpha > 0.0:
            raise InvalidParam(f"alpha must be positive, got {alpha}.")
        if mu is None:
            mu = [(np.ones(base.d), 1.0)]
        points = np.array([np.asarray(p, dtype=float).reshape(-1) for p, _ in mu])
        weights = np.array([float(w) for _, w in mu])
        if points.ndim != 2 or points.shape[1] != base.d:
            raise DimensionMismatch(f"Points of mu must have dimension {base.d}.")
        if np.any(weights <= 0.0) or abs(weights.sum() - 1.0) > 1e-12:
            raise InvalidParam("Weights of mu must be positive and sum to 1.")
        if majorant is None:
            scale = max(base.ellipticity_Lambda, perturbed.ellipticity_Lambda)
            majorant = MajorantParams(2.0 * math.sqrt(scale))
        self._base = base
        self._perturbed = perturbed
        self._epsilon = float(epsilon)
        self._delta = delta
        self._alpha = alpha
        self._mu_points = points
        self._mu_weights = weights
        self._majorant = majorant

    @property
    def base(self) -> DiffusionSpec:
        """Original model."""
        return self._base

    @property
    def perturbed(self) -> DiffusionSpec:
        """Perturbed model."""
        return self._perturbed

    @property
    def epsilon(self) -> float:
        """Perturbation label."""
        return self._epsilon

    @property
    def gamma(self) -> float:
        """Common Hölder exponent."""
        return self._base.gamma

    @property
    def delta(self) -> float:
        """Exponent of the bounds, in ``(gamma/2, gamma)``."""
        return self._delta

    @property
    def alpha(self) -> float:
        """Split between diagonal and off-diagonal maxima."""
        return self._alpha

    @property
    def mu(self) -> List[Tuple[Array, float]]:
        """Atoms and weights of the starting measure."""
        return [(p.copy(), float(w)) for p, w in zip(self._mu_points, self._mu_weights)]

    @property
    def mu_points(self) -> Array:
        """Atoms of the starting measure, shape ``(n_atoms, d)``."""
        return self._mu_points.copy()

    @property
    def mu_weights(self) -> Array:
        """Weights of the starting measure, summing to 1."""
        return self._mu_weights.copy()

    @property
    def majorant(self) -> MajorantParams:
        """Majorant parameters."""
        return self._majorant

    @property
    def horizon_T(self) -> float:
        """Final time of the base model."""
        return self._base.horizon_T

    @property
    def lipschitz_K(self) -> float:
        """Larger declared regularity constant of the two models."""
        return max(self._base.lipschitz_K, self._perturbed.lipschitz_K)

    @property
    def ellipticity_Lambda(self) -> float:
        """Larger declared ellipticity constant of the two models."""
        return max(self._base.ellipticity_Lambda, self._perturbed.ellipticity_Lambda)

    def drift_difference(self, t: ArrayLike, x: ArrayLike) -> Array:
        """:math:`b - b_\\varepsilon` at ``(t, x)``."""
        return self._base.drift(t, x) - self._perturbed.drift(t, x)

    def sigma_difference(self, t: ArrayLike, x: ArrayLike) -> Array:
        """:math:`\\sigma - \\sigma_\\varepsilon` at ``(t, x)``."""
        return self._base.sigma(t, x) - self._perturbed.sigma(t, x)

    def __repr__(self) -> str:
        """Printable representation of the object."""
        return (
            f"<{self.__class__.__name__} base: {self._base.name}, "
            f"perturbed: {self._perturbed.name}, epsilon: {self._epsilon}>"
        )


def oscillating_pair(
    eps: float,
    q: float,
    sigma: float = 1.0,
    horizon_T: float = 1.0,
    **kwargs: Any,
) -> PerturbationPair:
    """
    Perturbation pair of the oscillating drift experiment.

    Builds the ``oscillating_pair`` built-in models. Keyword arguments are passed to
    :class:`PerturbationPair`, whose defaults are ``delta = 3/4``, ``alpha = sqrt(eps)`` and
    ``mu`` the Dirac mass at 1.
    """
    models = builtin_model("oscillating_pair", {"eps": eps, "q": q, "sigma": sigma, "T": horizon_T})
    assert isinstance(models, tuple)
    base, perturbed = models
    return PerturbationPair(base, perturbed, eps, **kwargs)


def delta_diagonal(pair: PerturbationPair, t: float, x: ArrayLike) -> float:
    """
    On-diagonal perturbation size.

    This is :math:`|b - b_\\varepsilon|(t,x) + |\\sigma - \\sigma_\\varepsilon|(t,x)`.
    """
    x_arr = np.asarray(x, dtype=float).reshape(1, pair.base.d)
    drift = norm_values(pair.drift_difference, t, x_arr)[0]
    sigma = norm_values(pair.sigma_difference, t, x_arr)[0]
    return float(drift + sigma)


def _check_cell(pair: PerturbationPair, t: float, s: float) -> None:
    check_interval(t, s)
    if t < 0.0 or s > pair.horizon_T * (1.0 + 1e-12):
        raise OutOfInterval(f"[{t}, {s}] is not inside [0, {pair.horizon_T}].")


def delta_l1(
    pair: PerturbationPair, t: float, s: float, quad: Optional[QuadConfig] = None
) -> Tuple[float, float]:
    """
    Integral perturbation sizes of the drift and of the diffusion coefficient.

    Returns :math:`(\\Delta_{\\varepsilon,b}(t,s), \\Delta_{\\varepsilon,\\sigma}(t,s))` with

    .. math::

        \\Delta_{\\varepsilon,b}(t,s) =\\int\\mu(dx)\\int dy\\int_t^s \\mathfrak{B}(u;1,\\gamma/2)
        |(b - b_\\varepsilon)(u, \\theta_{u,s}(y))|_1 \\bar p(t,s,x,y) du

    and the same for the diffusion coefficient with the :math:`\\gamma`-seminorm. The time
    integral is Gauss-Jacobi for the beta weight, the ``y`` integral a trapezoidal grid around
    the forward flow of ``x`` normalized against the majorant, and the ``x`` integral a sum over
    the atoms of ``mu``.

    Parameters
    ----------
    pair : PerturbationPair
        Models and bound parameters.
    t, s : float
        Interval, ``0 <= t < s <= T``.
    quad : QuadConfig, optional
        ``n_time`` sets the Gauss-Jacobi nodes, ``n_space`` and ``space_radius`` the ``y`` grid.

    Returns
    -------
    tuple of float
        Drift and diffusion perturbation sizes.
    """
    _check_cell(pair, t, s)
    quad = quad or QuadConfig()
    base = pair.base
    d = base.d
    nodes, weights = beta_rule(t, s, pair.gamma, quad.n_time)
    _, xi, xi_weights = _xi_grid(quad.n_space, d)
    offsets = comparison_cloud(d)
    half_width = (
        quad.space_radius
        * pair.majorant.lam
        * math.sqrt(s - t)
        * math.exp(pair.lipschitz_K * (s - t))
    )
    delta_b = 0.0
    delta_sigma = 0.0
    for x, weight in zip(pair.mu_points, pair.mu_weights):
        center, _ = integrate_flows(base.drift, s, t, x[None, :])
        ys = center[0] + half_width * xi
        bar = majorant_batch(pair.majorant, base, t, s, x[None, :], ys)
        y_weights = xi_weights * bar
        y_weights = y_weights / y_weights.sum()
        _, paths = integrate_flows(
            base.drift, t, s, ys, record=np.broadcast_to(nodes, (ys.shape[0], nodes.size))
        )
        assert paths is not None
        drift = seminorm_values(pair.drift_difference, nodes, paths, 1.0, offsets)
        sigma = seminorm_values(pair.sigma_difference, nodes, paths, pair.gamma, offsets)
        delta_b += weight * float(y_weights @ (drift @ weights))
        delta_sigma += weight * float(y_weights @ (sigma @ weights))
    logger.debug(f"Delta on [{t}, {s}]: b={delta_b:.6g}, sigma={delta_sigma:.6g}")
    return delta_b, delta_sigma


def uniform_time_grid(t0: float, t1: float, dt: float) -> List[Cell]:
    """
    Cells ``(t, s)`` with ``t = t0 + k dt``, ``s = t + j dt <= t1`` and ``j >= 1``.

    Times are built from integer multiples of ``dt``, so ``(t1 - t0) / dt`` must be an integer.
    """
    count = round((t1 - t0) / dt)
    if count < 1 or abs(count * dt - (t1 - t0)) > 1e-9 * max(1.0, abs(t1 - t0)):
        raise InvalidParam(f"dt={dt} does not divide [{t0}, {t1}] into whole steps.")
    times = [t0 + k * (t1 - t0) / count for k in range(count + 1)]
    return [(times[k], times[j]) for k in range(count) for j in range(k + 1, count + 1)]


class Maxima:
    """
    Diagonal and off-diagonal maxima of the perturbation sizes over a time grid.

    ``M`` and ``Mbar`` are taken over cells with ``s - t <= alpha``, ``MC`` and ``MbarC`` over
    the other cells. A region without cells has maxima zero.
    """

    def __init__(
        self,
        values: Mapping[str, float],
        argmax: Mapping[str, Optional[Cell]],
        deltas: Mapping[Cell, Tuple[float, float]],
    ):
        self._values = dict(values)
        self._argmax = dict(argmax)
        self._deltas = dict(deltas)

    @property
    def M(self) -> float:
        """
        Diagonal maximum of :math:`(s-t)^{\\delta-\\gamma/2}\\Delta_\\varepsilon^{\\gamma-\\delta}`.
        """
        return self._values["M"]

    @property
    def Mbar(self) -> float:
        """Diagonal maximum of :math:`\\Delta_\\varepsilon^{\\gamma-\\delta}`."""
        return self._values["Mbar"]

    @property
    def MC(self) -> float:
        """
        Off-diagonal maximum of
        :math:`(s-t)^{\\delta-\\gamma/2}\\Delta_\\varepsilon^{\\gamma-\\delta}`.
        """
        return self._values["MC"]

    @property
    def MbarC(self) -> float:
        """Off-diagonal maximum of :math:`\\Delta_\\varepsilon^{\\gamma-\\delta}`."""
        return self._values["MbarC"]

    @property
    def argmax(self) -> Dict[str, Optional[Cell]]:
        """Cell attaining each maximum, the smallest one on ties."""
        return dict(self._argmax)

    @property
    def deltas(self) -> Dict[Cell, Tuple[float, float]]:
        """Perturbation sizes per cell."""
        return dict(self._deltas)

    def as_tuple(self) -> Tuple[float, float, float, float]:
        """``(M, Mbar, MC, MbarC)``."""
        return self.M, self.Mbar, self.MC, self.MbarC

    def __repr__(self) -> str:
        """Printable representation of the object."""
        return f"<{self.__class__.__name__} cells: {len(self._deltas)}>"


def maxima(
    pair: PerturbationPair,
    time_grid: Sequence[Cell],
    quad: Optional[QuadConfig] = None,
    threads: int = DEFAULT_THREADS,
) -> Maxima:
    """
    Diagonal and off-diagonal maxima of the perturbation sizes.

    With :math:`\\Delta_\\varepsilon = \\Delta_{\\varepsilon,b} + \\Delta_{\\varepsilon,\\sigma}`,
    ``M`` is the maximum of
    :math:`(s-t)^{\\delta-\\gamma/2}\\Delta_\\varepsilon(t,s)^{\\gamma-\\delta}` over the cells with
    ``s - t <= alpha`` and ``Mbar`` the maximum of :math:`\\Delta_\\varepsilon^{\\gamma-\\delta}`
    there. ``MC`` and ``MbarC`` are the same over
    the cells with ``s - t > alpha``.

    Parameters
    ----------
    pair : PerturbationPair
        Models and bound parameters.
    time_grid : sequence of (float, float)
        Cells ``(t, s)``.
    quad : QuadConfig, optional
        Quadrature settings of :func:`delta_l1`.
    threads : int, default 1
        Worker threads.

    Returns
    -------
    Maxima

    Raises
    ------
    EmptyGrid
        If the time grid is empty.
    """
    cells = [(float(t), float(s)) for t, s in time_grid]
    if not cells:
        raise EmptyGrid("The time grid has no cells.")
    logger.info(f"Computing perturbation maxima of {pair!r} over {len(set(cells))} cells")
    evaluator: _GridEvaluator[Cell, Tuple[float, float]] = _GridEvaluator(
        lambda cell: delta_l1(pair, cell[0], cell[1], quad), threads
    )
    deltas = dict(evaluator.evaluate(cells))
    exponent = pair.gamma - pair.delta
    weight_exponent = pair.delta - pair.gamma / 2.0
    values = {"M": 0.0, "Mbar": 0.0, "MC": 0.0, "MbarC": 0.0}
    argmax: Dict[str, Optional[Cell]] = {key: None for key in values}
    for cell in sorted(deltas):
        t, s = cell
        delta = sum(deltas[cell])
        powered = delta**exponent
        weighted = (s - t) ** weight_exponent * powered
        diagonal = s - t <= pair.alpha
        if diagonal:
            updates = (("M", weighted), ("Mbar", powered))
        else:
            updates = (("MC", weighted), ("MbarC", powered))
        for key, value in updates:
            if argmax[key] is None or value > values[key]:
                values[key] = value
                argmax[key] = cell
    return Maxima(values, argmax, deltas)


class L1Bound:
    """Strong and weak forms of the integral stability bound."""

    def __init__(self, strong: float, weak: float):
        self._strong = strong
        self._weak = weak

    @property
    def strong(self) -> float:
        """Bound with the maxima ``M + MC``."""
        return self._strong

    @property
    def weak(self) -> float:
        """Bound with ``alpha**(delta - gamma/2) Mbar + T**(delta - gamma/2) MbarC``."""
        return self._weak

    def __repr__(self) -> str:
        """Printable representation of the object."""
        return f"<{self.__class__.__name__} strong: {self._strong:.6g}, weak: {self._weak:.6g}>"


def _resolve_maxima(
    pair: PerturbationPair,
    t: float,
    s: float,
    maxima_: Optional[Maxima],
    quad: Optional[QuadConfig],
    threads: int,
) -> Maxima:
    if maxima_ is not None:
        return maxima_
    step = (s - t) / DEFAULT_TIME_CELLS
    return maxima(pair, uniform_time_grid(t, s, step), quad, threads)


def l1_theorem_bound(
    pair: PerturbationPair,
    t: float,
    s: float,
    fitted_C: float,
    maxima: Optional[Maxima] = None,
    quad: Optional[QuadConfig] = None,
    threads: int = DEFAULT_THREADS,
) -> L1Bound:
    """
    Integral stability bound on :math:`\\|p - p_\\varepsilon\\|` in :math:`L_1^\\mu(L_1)`.

    Returns :math:`C/(\\delta-\\gamma/2)(M + M^C)` and the weaker bound

    .. math::

        C/(\\delta-\\gamma/2)(\\alpha^{\\delta-\\gamma/2}\\bar M + T^{\\delta-\\gamma/2}\\bar M^C).

    Parameters
    ----------
    pair : PerturbationPair
        Models and bound parameters.
    t, s : float
        Interval.
    fitted_C : float
        Calibrated constant, nonnegative.
    maxima : Maxima, optional
        Precomputed maxima. Defaults to the maxima over a uniform grid of ``[t, s]`` with ten
        steps.
    quad : QuadConfig, optional
        Quadrature settings used when the maxima are computed.
    threads : int, default 1
        Worker threads used when the maxima are computed.

    Returns
    -------
    L1Bound
    """
    check_interval(t, s)
    if not fitted_C >= 0.0:
        raise InvalidParam(f"fitted_C must be nonnegative, got {fitted_C}.")
    found = _resolve_maxima(pair, t, s, maxima, quad, threads)
    gap = pair.delta - pair.gamma / 2.0
    factor = fitted_C / gap
    strong = factor * (found.M + found.MC)
    weak = factor * (pair.alpha**gap * found.Mbar + pair.horizon_T**gap * found.MbarC)
    return L1Bound(strong, weak)


def l1_order_bound(
    pair: PerturbationPair, t: float, s: float, n: int, fitted_C: float, maxima: Maxima
) -> float:
    """
    Bound on the integral difference of the order-``n`` series terms, ``n >= 1``.

    Returns :math:`C^{n+2}(\\alpha^{\\delta-\\gamma/2}\\bar M + T^{\\delta-\\gamma/2}\\bar M^C)
    (s-t)^{\\delta+(n-1)\\gamma/2}\\sum_{i=1}^n\\Gamma(\\gamma/2)^i/\\Gamma(1+n\\gamma/2)`.
    """
    check_interval(t, s)
    if n < 1:
        raise InvalidParam(f"Order must be at least 1, got {n}.")
    gamma, delta = pair.gamma, pair.delta
    gap = delta - gamma / 2.0
    level = pair.alpha**gap * maxima.Mbar + pair.horizon_T**gap * maxima.MbarC
    powers = sum(gamma_fn(gamma / 2.0) ** i for i in range(1, n + 1))
    series = powers / gamma_fn(1.0 + n * gamma / 2.0)
    return fitted_C ** (n + 2) * level * (s - t) ** (delta + (n - 1) * gamma / 2.0) * series


class DensityDifference:
    """Integral distance between the series of two models, in total and per order."""

    def __init__(self, total: float, per_order: Sequence[float]):
        self._total = total
        self._per_order = tuple(per_order)

    @property
    def total(self) -> float:
        """:math:`\\sum_i w_i \\int |p - p_\\varepsilon|(t,s,x_i,y) dy`."""
        return self._total

    @property
    def per_order(self) -> Tuple[float, ...]:
        """
        Differences per order ``n``.

        .. math::

            \\sum_i w_i
            \\int |\\tilde p\\otimes H^n - \\tilde p_\\varepsilon\\otimes H_\\varepsilon^n| dy
        """
        return self._per_order

    def __repr__(self) -> str:
        """Printable representation of the object."""
        return f"<{self.__class__.__name__} total: {self._total:.6g}>"


def density_diff_terms(
    pair: PerturbationPair, t: float, s: float, N: int = 3, quad: Optional[QuadConfig] = None
) -> DensityDifference:
    """
    Integral distance between the truncated series of the two models, with per-order parts.

    Both series are evaluated on one trapezoidal ``y`` grid per atom of ``mu``, centered between
    the forward flows of the atom and wide enough for both.
    """
    check_interval(t, s)
    quad = quad or QuadConfig()
    d = pair.base.d
    _, xi, xi_weights = _xi_grid(quad.n_space, d)
    span = s - t
    spread = (
        quad.space_radius
        * math.sqrt(pair.ellipticity_Lambda * span)
        * math.exp(pair.lipschitz_K * span)
    )
    total = 0.0
    per_order = np.zeros(N + 1)
    for x, weight in zip(pair.mu_points, pair.mu_weights):
        base_center, _ = integrate_flows(pair.base.drift, s, t, x[None, :])
        perturbed_center, _ = integrate_flows(pair.perturbed.drift, s, t, x[None, :])
        center = 0.5 * (base_center[0] + perturbed_center[0])
        half_width = spread + 0.5 * np.abs(base_center[0] - perturbed_center[0])
        ys = center + half_width * xi
        cell = float(np.prod(half_width))
        base_terms = series_terms(pair.base, t, s, x, ys, N, quad)
        perturbed_terms = series_terms(pair.perturbed, t, s, x, ys, N, quad)
        difference = np.abs(base_terms.sum(axis=0) - perturbed_terms.sum(axis=0))
        total += weight * cell * float(xi_weights @ difference)
        per_order += weight * cell * (np.abs(base_terms - perturbed_terms) @ xi_weights)
    return DensityDifference(total, per_order.tolist())


def density_diff_l1(
    pair: PerturbationPair, t: float, s: float, N: int = 3, quad: Optional[QuadConfig] = None
) -> float:
    """
    Integral distance :math:`\\sum_i w_i \\int |p(t,s,x_i,y) - p_\\varepsilon(t,s,x_i,y)| dy`.

    Both densities are order-``N`` parametrix series on a shared ``y`` grid.

    Parameters
    ----------
    pair : PerturbationPair
        Models and starting measure.
    t, s : float
        Interval, ``t < s``.
    N : int, default 3
        Truncation order.
    quad : QuadConfig, optional
        Quadrature settings of the series and of the ``y`` grid.

    Returns
    -------
    float
    """
    logger.info(f"Computing the integral density difference of {pair!r} on [{t}, {s}]")
    return density_diff_terms(pair, t, s, N, quad).total


def default_sup_grid(
    t: float,
    s: float,
    d: int,
    n_time: int = DEFAULT_SUP_TIMES,
    n_space: int = DEFAULT_SUP_SPACE,
    box: float = DEFAULT_BOX,
) -> Array:
    """Tensor grid of ``(u, x)`` points over ``[t, s] x [-box, box]^d``, shape ``(n, 1 + d)``."""
    times = np.linspace(t, s, n_time)
    axis = np.linspace(-box, box, n_space)
    mesh = np.meshgrid(times, *([axis] * d), indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def delta_linf(
    pair: PerturbationPair, t: float, s: float, sup_grid: Optional[ArrayLike] = None
) -> Tuple[float, float]:
    """
    Uniform perturbation sizes of the drift and of the diffusion coefficient.

    Returns :math:`(\\Delta^\\infty_{\\varepsilon,b}, \\Delta^\\infty_{\\varepsilon,\\sigma})`.

    The drift size is the largest :math:`|b - b_\\varepsilon|` on the grid. The diffusion size
    is the largest, over the grid times, global Hölder norm of
    :math:`\\sigma - \\sigma_\\varepsilon`:
    its supremum plus the largest Hölder ratio between grid points at that time.

    Parameters
    ----------
    pair : PerturbationPair
        Models.
    t, s : float
        Interval containing the grid times.
    sup_grid : array-like, optional
        Points ``(u, x_1, ..., x_d)``, shape ``(n, 1 + d)``. Defaults to
        :func:`default_sup_grid`.

    Returns
    -------
    tuple of float

    Raises
    ------
    EmptyGrid
        If the grid is empty.
    OutOfInterval
        If a grid time is outside ``[t, s]``.
    """
    d = pair.base.d
    grid = default_sup_grid(t, s, d) if sup_grid is None else np.asarray(sup_grid, dtype=float)
    grid = grid.reshape(-1, 1 + d)
    if grid.shape[0] == 0:
        raise EmptyGrid("The sup grid has no points.")
    times, points = grid[:, 0], grid[:, 1:]
    if np.any(times < t) or np.any(times > s):
        raise OutOfInterval(f"Sup grid times must lie in [{t}, {s}].")
    delta_b = float(norm_values(pair.drift_difference, times, points).max())
    delta_sigma = 0.0
    for time in np.unique(times):
        at_time = points[times == time]
        values = pair.sigma_difference(time, at_time).reshape(at_time.shape[0], -1)
        holder = float(np.linalg.norm(values, axis=-1).max())
        if at_time.shape[0] > 1:
            distances = np.linalg.norm(at_time[:, None, :] - at_time[None, :, :], axis=-1)
            differences = np.linalg.norm(values[:, None, :] - values[None, :, :], axis=-1)
            mask = distances > 0.0
            holder += float((differences[mask] / distances[mask] ** pair.gamma).max(initial=0.0))
        delta_sigma = max(delta_sigma, holder)
    return delta_b, delta_sigma


def lq_lp_norm(
    values: Sequence[ArrayLike],
    mu_weights: ArrayLike,
    y_weights: Optional[Sequence[ArrayLike]] = None,
    p: float = 1.0,
    q: float = 1.0,
) -> float:
    """
    Mixed norm :math:`[\\int(\\int|f(x,y)|^p\\lambda(dy))^{q/p}\\mu(dx)]^{1/q}`.

    Parameters
    ----------
    values : sequence of array-like
        One array of ``|f(x_i, y)|`` values per atom ``x_i``.
    mu_weights : array-like
        Weights of the atoms.
    y_weights : sequence of array-like, optional
        Quadrature weights of ``lambda`` per atom. Defaults to counting measure.
    p, q : float
        Exponents in ``[1, inf]``. ``numpy.inf`` takes a supremum.
    """
    if p < 1.0 or q < 1.0:
        raise InvalidParam(f"Exponents must be at least 1, got p={p} and q={q}.")
    weights = np.asarray(mu_weights, dtype=float)
    inner = []
    for i, row in enumerate(values):
        magnitude = np.abs(np.asarray(row, dtype=float))
        if y_weights is None:
            lam = np.ones_like(magnitude)
        else:
            lam = np.asarray(y_weights[i], dtype=float)
        if math.isinf(p):
            inner.append(float(magnitude.max(initial=0.0)))
        else:
            inner.append(float(lam @ magnitude**p) ** (1.0 / p))
    inner_arr = np.array(inner)
    if math.isinf(q):
        return float(inner_arr[weights > 0.0].max(initial=0.0))
    return float(weights @ inner_arr**q) ** (1.0 / q)


class PerturbationReport:
    """
    Result of a stability-bound check over one interval.

    Read-only. ``kind`` is ``"l1"`` or ``"linf"``.
    """

    def __init__(
        self,
        kind: str,
        t: float,
        s: float,
        epsilon: float,
        delta_b: float,
        delta_sigma: float,
        maxima: Tuple[float, float, float, float],
        lhs: float,
        rhs: float,
        fitted_constants: Mapping[str, float],
        passed: bool,
        location: Optional[Tuple[Array, Array]] = None,
        norm_lhs: Optional[float] = None,
        norm_rhs: Optional[float] = None,
    ):
        self._kind = kind
        self._t = t
        self._s = s
        self._epsilon = epsilon
        self._delta_b = delta_b
        self._delta_sigma = delta_sigma
        self._maxima = maxima
        self._lhs = lhs
        self._rhs = rhs
        self._fitted_constants = dict(fitted_constants)
        finite = all(
            math.isfinite(v) and v >= 0.0
            for v in (delta_b, delta_sigma, lhs, rhs, *maxima, *self._fitted_constants.values())
        )
        self._passed = bool(passed and finite)
        self._location = location
        self._norm_lhs = norm_lhs
        self._norm_rhs = norm_rhs

    @property
    def kind(self) -> str:
        """Norm of the check, ``"l1"`` or ``"linf"``."""
        return self._kind

    @property
    def t(self) -> float:
        """Start time of the interval."""
        return self._t

    @property
    def s(self) -> float:
        """Terminal time of the interval."""
        return self._s

    @property
    def epsilon(self) -> float:
        """Perturbation label of the pair."""
        return self._epsilon

    @property
    def delta_b(self) -> float:
        """Drift perturbation size."""
        return self._delta_b

    @property
    def delta_sigma(self) -> float:
        """Diffusion perturbation size."""
        return self._delta_sigma

    @property
    def maxima(self) -> Tuple[float, float, float, float]:
        """``(M, Mbar, MC, MbarC)``. Zero for uniform checks."""
        return self._maxima

    @property
    def lhs(self) -> float:
        """Computed density difference."""
        return self._lhs

    @property
    def rhs(self) -> float:
        """Bound with the fitted constant."""
        return self._rhs

    @property
    def fitted_constants(self) -> Dict[str, float]:
        """Fitted constants by name."""
        return dict(self._fitted_constants)

    @property
    def passed(self) -> bool:
        """Whether the bound holds and every entry is finite and nonnegative."""
        return self._passed

    @property
    def location(self) -> Optional[Tuple[Array, Array]]:
        """Point ``(x, y)`` attaining the fitted constant of a uniform check."""
        return self._location

    @property
    def norm_lhs(self) -> Optional[float]:
        """Mixed norm of the density difference, for uniform checks."""
        return self._norm_lhs

    @property
    def norm_rhs(self) -> Optional[float]:
        """Mixed norm of the uniform bound, for uniform checks."""
        return self._norm_rhs

    def as_row(self) -> Dict[str, Any]:
        """Flat row with the fields of :data:`CSV_FIELDS`."""
        M, Mbar, MC, MbarC = self._maxima
        return {
            "t": self._t,
            "s": self._s,
            "eps": self._epsilon,
            "delta_b": self._delta_b,
            "delta_sigma": self._delta_sigma,
            "M": M,
            "Mbar": Mbar,
            "MC": MC,
            "MbarC": MbarC,
            "lhs": self._lhs,
            "rhs": self._rhs,
            "fittedC": self._fitted_constants.get("C", 0.0),
            "passed": self._passed,
        }

    def __repr__(self) -> str:
        """Printable representation of the object."""
        return f"<{self.__class__.__name__} kind: {self._kind}, passed: {self._passed}>"


def _ratio(lhs: Array, rhs: Array) -> Array:
    lhs = np.asarray(lhs, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        degenerate = np.where(lhs > 0.0, np.inf, 0.0)
        ratio = np.where(rhs > 0.0, lhs / np.where(rhs > 0.0, rhs, 1.0), degenerate)
    return ratio


def calibrate_constant(lhs: Sequence[float], unit_rhs: Sequence[float]) -> float:
    """Smallest constant ``C`` with ``lhs <= C * unit_rhs`` for every entry."""
    ratio = _ratio(np.asarray(lhs), np.asarray(unit_rhs))
    return float(ratio.max(initial=0.0))


def l1_theorem_check(
    pair: PerturbationPair,
    t: float,
    s: float,
    N: int = 3,
    quad: Optional[QuadConfig] = None,
    time_grid: Optional[Sequence[Cell]] = None,
    fitted_C: Optional[float] = None,
    threads: int = DEFAULT_THREADS,
) -> PerturbationReport:
    """
    Compare the integral density difference with the integral stability bound.

    Without ``fitted_C`` the constant is calibrated on this interval alone, so the bound holds
    by construction and the report carries the calibrated value.
    """
    check_interval(t, s)
    if time_grid is None:
        time_grid = uniform_time_grid(t, s, (s - t) / DEFAULT_TIME_CELLS)
    found = maxima(pair, time_grid, quad, threads)
    delta_b, delta_sigma = delta_l1(pair, t, s, quad)
    lhs = density_diff_l1(pair, t, s, N, quad)
    unit = l1_theorem_bound(pair, t, s, 1.0, found)
    constant = calibrate_constant([lhs], [unit.strong]) if fitted_C is None else fitted_C
    rhs = constant * unit.strong
    return PerturbationReport(
        "l1",
        t,
        s,
        pair.epsilon,
        delta_b,
        delta_sigma,
        found.as_tuple(),
        lhs,
        rhs,
        {"C": constant, "weak_bound": constant * unit.weak},
        lhs <= rhs * (1.0 + BOUND_TOLERANCE),
    )


def linf_theorem_check(
    pair: PerturbationPair,
    t: float,
    s: float,
    eval_grid: ArrayLike,
    sup_grid: Optional[ArrayLike] = None,
    N: int = 3,
    quad: Optional[QuadConfig] = None,
    fitted_C: Optional[float] = None,
    p: float = 1.0,
    q: float = 1.0,
) -> PerturbationReport:
    """
    Check the uniform stability bound.

    The bound is :math:`|p - p_\\varepsilon| \\le C(\\Delta^\\infty_\\varepsilon)^\\gamma \\bar p`.

    Parameters
    ----------
    pair : PerturbationPair
        Models and majorant.
    t, s : float
        Interval, ``t < s``.
    eval_grid : array-like
        Points ``(x_1..x_d, y_1..y_d)``, shape ``(n, 2 d)``.
    sup_grid : array-like, optional
        Grid of :func:`delta_linf`.
    N : int, default 3
        Truncation order of both series.
    quad : QuadConfig, optional
        Quadrature settings.
    fitted_C : float, optional
        Constant to check against. Defaults to the largest ratio on the grid.
    p, q : float, default 1
        Exponents of the mixed norms reported next to the pointwise check. ``mu`` is uniform
        over the distinct starting points and ``lambda`` is counting measure on the grid.

    Returns
    -------
    PerturbationReport

    Raises
    ------
    EmptyGrid
        If the evaluation grid is empty.
    """
    check_interval(t, s)
    d = pair.base.d
    grid = np.asarray(eval_grid, dtype=float).reshape(-1, 2 * d)
    if grid.shape[0] == 0:
        raise EmptyGrid("The evaluation grid has no points.")
    logger.info(
        f"Checking the uniform stability bound of {pair!r} on [{t}, {s}] "
        f"at {grid.shape[0]} points"
    )
    quad = quad or QuadConfig()
    delta_b, delta_sigma = delta_linf(pair, t, s, sup_grid)
    level = (delta_b + delta_sigma) ** pair.gamma
    starts, inverse = np.unique(grid[:, :d], axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    lhs = np.empty(grid.shape[0])
    bars = np.empty(grid.shape[0])
    for i, x in enumerate(starts):
        rows = np.nonzero(inverse == i)[0]
        ys = grid[rows, d:]
        base = series_terms(pair.base, t, s, x, ys, N, quad).sum(axis=0)
        perturbed = series_terms(pair.perturbed, t, s, x, ys, N, quad).sum(axis=0)
        lhs[rows] = np.abs(base - perturbed)
        bars[rows] = majorant_batch(pair.majorant, pair.base, t, s, x[None, :], ys)
    unit = level * bars
    ratios = _ratio(lhs, unit)
    best = int(np.argmax(ratios))
    constant = float(ratios[best]) if fitted_C is None else float(fitted_C)
    rhs_values = constant * unit
    groups = [np.nonzero(inverse == i)[0] for i in range(starts.shape[0])]
    mu = np.full(len(groups), 1.0 / len(groups))
    norm_lhs = lq_lp_norm([lhs[g] for g in groups], mu, None, p, q)
    norm_rhs = constant * lq_lp_norm([(level * bars)[g] for g in groups], mu, None, p, q)
    pointwise = bool(np.all(lhs <= rhs_values * (1.0 + BOUND_TOLERANCE) + 1e-300))
    passed = pointwise and norm_lhs <= norm_rhs * (1.0 + BOUND_TOLERANCE) + 1e-300
    logger.debug(f"Uniform check fitted C={constant:.6g} at point {grid[best]}")
    return PerturbationReport(
        "linf",
        t,
        s,
        pair.epsilon,
        delta_b,
        delta_sigma,
        (0.0, 0.0, 0.0, 0.0),
        float(lhs.max()),
        float(rhs_values.max()),
        {"C": constant},
        passed,
        location=(grid[best, :d].copy(), grid[best, d:].copy()),
        norm_lhs=norm_lhs,
        norm_rhs=norm_rhs,
    )


def holder_beta_norm(t: float, s: float, p: float) -> float:
    """
    :math:`(\\int_t^s \\mathfrak{B}(u;1,1/2)^p du)^{1/p} = (s-t)^{1/p-1} / (B(1,1/2)(1-p/2)^{1/p})`.

    Raises
    ------
    InvalidParam
        If ``p`` is not in ``[1, 2)``.
    """
    check_interval(t, s)
    if not 1.0 <= p < 2.0:
        raise InvalidParam(f"p must be in [1, 2), got {p}.")
    return (s - t) ** (1.0 / p - 1.0) / (beta_fn(1.0, 0.5) * (1.0 - p / 2.0) ** (1.0 / p))


def oscillation_energy(t: float, s: float, eps: float) -> float:
    """
    :math:`\\int_t^s e^{-u^2/\\varepsilon}\\sin^2(u/\\sqrt\\varepsilon)du` by Gauss-Legendre panels.
    """
    check_interval(t, s)
    panel = min(FLOW_PANEL, math.sqrt(eps) / 4.0)
    nodes, weights = composite_gauss_legendre(t, s, FLOW_PANEL_NODES, panel)
    return float(weights @ (np.exp(-(nodes**2) / eps) * np.sin(nodes / math.sqrt(eps)) ** 2))


def oscillation_tail_integral(eps: float) -> float:
    """
    Closed form of the oscillation energy over the half line.

    .. math::

        \\int_0^\\infty e^{-u^2/\\varepsilon}\\sin^2(u/\\sqrt\\varepsilon)du
        = \\sqrt{\\pi\\varepsilon}(1 - 1/e)/4
    """
    if not eps > 0.0:
        raise InvalidParam(f"eps must be positive, got {eps}.")
    return 0.25 * math.sqrt(math.pi * eps) * (1.0 - math.exp(-1.0))


def oscillating_rate_exponent(q: float, delta: float = 0.75) -> float:
    """
    Decay exponent in ``eps`` of the integral bound for the oscillating drift perturbation.

    Returns :math:`(1-\\delta)(\\delta-1/2) / (2[q(\\delta-1/2) + 1 - \\delta])`, which is
    :math:`1/(8(1+q))` at :math:`\\delta = 3/4`.

    Raises
    ------
    InvalidParam
        If ``q <= 2`` or ``delta`` is not in ``(1/2, 1)``.
    """
    if not q > 2.0:
        raise InvalidParam(f"Rate experiments need q > 2, got {q}.")
    if not 0.5 < delta < 1.0:
        raise InvalidParam(f"delta must be in (1/2, 1), got {delta}.")
    return (1.0 - delta) * (delta - 0.5) / (2.0 * (q * (delta - 0.5) + 1.0 - delta))


def nonuniform_lower_bound(q: float) -> float:
    """
    Lower bound :math:`2^{-2/q}e^{-\\pi^2/(4q)}` of the drift perturbation near ``t = sqrt(eps)``.
    """
    if not q > 0.0:
        raise InvalidParam(f"q must be positive, got {q}.")
    return 2.0 ** (-2.0 / q) * math.exp(-(math.pi**2) / (4.0 * q))


def fit_holder_constant(deltas: Mapping[Cell, float], eps: float, q: float) -> float:
    """
    Smallest ``M`` with :math:`\\Delta_{\\varepsilon,b}(t,s) \\le M\\|\\mathfrak{B}\\|_p
    (\\int_t^s e^{-u^2/\\varepsilon}\\sin^2(u/\\sqrt\\varepsilon)du)^{1/q}` on every cell.

    ``p`` is the conjugate exponent ``q / (q - 1)``.
    """
    p = q / (q - 1.0)
    ratios = []
    for (t, s), delta in deltas.items():
        bound = holder_beta_norm(t, s, p) * oscillation_energy(t, s, eps) ** (1.0 / q)
        ratios.append((delta, bound))
    return calibrate_constant([r[0] for r in ratios], [r[1] for r in ratios])


class LemmaReport:
    """
    Fitted constant of one numerical lemma verification.

    Read-only. ``lhs`` and ``rhs`` hold one entry per evaluated sample (and multi-index for
    derivative lemmas). The reported constant is the largest ``lhs / rhs``.
    """

    def __init__(
        self,
        lemma: str,
        lhs: Array,
        rhs: Array,
        samples: Array,
        variants: Mapping[str, float],
        scaling_exponent: Optional[float] = None,
    ):
        self._lemma = lemma
        self._lhs = lhs
        self._rhs = rhs
        ratios = _ratio(lhs, rhs)
        self._fitted_C = float(ratios.max(initial=0.0))
        self._argmax = samples[int(np.argmax(ratios))].copy() if ratios.size else None
        self._n_samples = samples.shape[0]
        self._variants = dict(variants)
        self._scaling_exponent = scaling_exponent
        self._finite = bool(
            np.all(np.isfinite(lhs)) and np.all(np.isfinite(rhs)) and math.isfinite(self._fitted_C)
        )

    @property
    def lemma(self) -> str:
        """Identifier of the verified estimate."""
        return self._lemma

    @property
    def fitted_C(self) -> float:
        """Largest ratio of the computed difference to the bound without its constant."""
        return self._fitted_C

    @property
    def variants(self) -> Dict[str, float]:
        """Fitted constants of every bound variant."""
        return dict(self._variants)

    @property
    def n_samples(self) -> int:
        """Number of sample tuples."""
        return self._n_samples

    @property
    def argmax(self) -> Optional[Array]:
        """Sample ``(t, s, x, y)`` attaining the fitted constant."""
        return self._argmax

    @property
    def finite(self) -> bool:
        """Whether every computed value and the constant are finite."""
        return self._finite

    @property
    def lhs(self) -> Array:
        """Computed differences, one per sample and multi-index."""
        return self._lhs

    @property
    def rhs(self) -> Array:
        """Bounds without their constant, aligned with :attr:`lhs`."""
        return self._rhs

    @property
    def scaling_exponent(self) -> Optional[float]:
        """
        Log-log slope of the singular part against ``s - t``, for kernel lemmas.

        The singular part is the difference divided by the majorant (and by :math:`\\psi` for
        ``kernels``), maximized per span. ``None`` with fewer than three spans.
        """
        return self._scaling_exponent

    def __repr__(self) -> str:
        """Printable representation of the object."""
        return f"<{self.__class__.__name__} lemma: {self._lemma}, fitted_C: {self._fitted_C:.6g}>"


def random_samples(
    pair: PerturbationPair,
    n: int = DEFAULT_N_SAMPLES,
    seed: int = 0,
    spans: Optional[Sequence[float]] = None,
    box: float = 3.0,
) -> Array:
    """
    Random tuples ``(t, s, x, y)`` for lemma verification, shape ``(n, 2 + 2 d)``.

    ``y`` is uniform in the box and ``x`` is drawn around the backward flow of ``y`` with the
    proxy spread, so that densities are not negligible.
    """
    rng = np.random.Generator(np.random.Philox(key=seed))
    d = pair.base.d
    T = pair.horizon_T
    t = rng.uniform(0.0, T / 2.0, n)
    if spans is None:
        span = rng.uniform(0.05, 1.0, n) * (T - t)
    else:
        span = np.resize(np.asarray(spans, dtype=float), n)
        t = np.minimum(t, T - span)
    s = t + span
    y = rng.uniform(-box, box, (n, d))
    theta, _ = integrate_flows(pair.base.drift, t, s, y)
    x = theta + np.sqrt(pair.ellipticity_Lambda * span)[:, None] * rng.standard_normal((n, d))
    return np.concatenate([t[:, None], s[:, None], x, y], axis=-1)


def diagonal_samples(
    pair: PerturbationPair,
    t: float,
    y: ArrayLike,
    spans: Sequence[float],
    offsets: Sequence[float] = DEFAULT_DIAGONAL_OFFSETS,
) -> Array:
    """
    Tuples ``(t, t + h, x, y)`` on the diagonal scale, one per span and offset.

    For every span ``h`` and offset ``z`` the starting point is
    :math:`x = \\theta_{t,t+h}(y) + z\\sqrt{\\Lambda h}` along every axis, so the standardized
    distance to the flow is the same for every span. Kernel lemma exponents are fitted on such
    sets.

    Raises
    ------
    EmptyGrid
        If ``spans`` or ``offsets`` is empty.
    OutOfInterval
        If ``t + h`` is outside ``[0, T]``.
    """
    d = pair.base.d
    y_arr = np.asarray(y, dtype=float).reshape(d)
    span_arr = np.asarray(spans, dtype=float).reshape(-1)
    offset_arr = np.asarray(offsets, dtype=float).reshape(-1)
    if span_arr.size == 0 or offset_arr.size == 0:
        raise EmptyGrid("Diagonal samples need at least one span and one offset.")
    for span in span_arr:
        _check_cell(pair, t, t + float(span))
    span_col = np.repeat(span_arr, offset_arr.size)
    z = np.tile(offset_arr, span_arr.size)
    t_col = np.full(span_col.size, float(t))
    s_col = t_col + span_col
    ys = np.tile(y_arr, (span_col.size, 1))
    theta, _ = integrate_flows(pair.base.drift, t_col, s_col, ys)
    x = theta + (z * np.sqrt(pair.ellipticity_Lambda * span_col))[:, None]
    return np.concatenate([t_col[:, None], s_col[:, None], x, ys], axis=-1)


def _multi_indices(d: int, order: int) -> List[Tuple[int, ...]]:
    indices = []
    for axes in combinations_with_replacement(range(d), order):
        indices.append(tuple(axes.count(axis) for axis in range(d)))
    return indices


class _DifferenceKernel:
    def __init__(self, first: Callable[..., Array], second: Callable[..., Array]):
        self._first = first
        self._second = second

    def __call__(self, t: float, s: float, x: ArrayLike, y: ArrayLike) -> Array:
        return self._first(t, s, x, y) - self._second(t, s, x, y)


class _LemmaTerms:
    # Flow integrals of the coefficient differences along the base flow.
    def __init__(self, pair: PerturbationPair, quad: QuadConfig):
        self._pair = pair
        self._quad = quad
        self._offsets = comparison_cloud(pair.base.d)
        self._sup_cache: Dict[Cell, float] = {}

    def _sizes(self, times: Array, points: Array, seminorm: bool) -> Tuple[Array, Array]:
        pair = self._pair
        if seminorm:
            return (
                seminorm_values(pair.drift_difference, times, points, 1.0, self._offsets),
                seminorm_values(pair.sigma_difference, times, points, pair.gamma, self._offsets),
            )
        return (
            norm_values(pair.drift_difference, times, points),
            norm_values(pair.sigma_difference, times, points),
        )

    def _along_flow(self, times: Array, s: float, y: Array, seminorm: bool) -> Tuple[Array, Array]:
        _, path = integrate_flows(
            self._pair.base.drift, float(times.min()), s, y[None, :], record=times[None, :]
        )
        assert path is not None
        return self._sizes(times, path[0], seminorm)

    def flow_integrals(
        self, t: float, s: float, y: Array, seminorm: bool = True
    ) -> Tuple[float, float]:
        nodes, weights = composite_gauss_legendre(t, s, FLOW_PANEL_NODES, FLOW_PANEL)
        drift, sigma = self._along_flow(nodes, s, y, seminorm)
        return float(weights @ drift), float(weights @ sigma)

    def phi(self, t: float, s: float, y: Array, seminorm: bool = True) -> float:
        exponent = self._pair.gamma - self._pair.delta
        drift, sigma = self.flow_integrals(t, s, y, seminorm)
        return drift**exponent + sigma**exponent

    def psi(self, t: float, s: float, y: Array) -> float:
        drift, sigma = self._along_flow(np.array([t]), s, y, True)
        return float(drift[0] + sigma[0])

    def psi_integral(self, t: float, s: float, y: Array) -> float:
        # int_t^s psi(u, s; y) (s - u)^(gamma/2 - 1) du
        half = self._pair.gamma / 2.0
        nodes, weights = beta_rule(t, s, self._pair.gamma, self._quad.n_time)
        drift, sigma = self._along_flow(nodes, s, y, True)
        return beta_fn(1.0, half) * (s - t) ** half * float(weights @ (drift + sigma))

    def uniform_level(self, t: float, s: float) -> float:
        key = (t, s)
        if key not in self._sup_cache:
            self._sup_cache[key] = sum(delta_linf(self._pair, t, s))
        return self._sup_cache[key] ** self._pair.gamma


def _main_term_bound(sizes: Tuple[float, float], span: float, gamma: float, delta: float) -> float:
    exponent = gamma - delta
    return sizes[0] ** exponent * span ** ((delta - gamma) / 2.0) + sizes[1] ** exponent * span ** (
        delta - gamma
    )


def _scaling_exponent(samples: Array, singular: Array) -> Optional[float]:
    # Log-log slope of the largest singular part per span, at least three spans.
    spans = np.round(samples[:, 1] - samples[:, 0], 12)
    distinct = np.unique(spans)
    if distinct.size < 3:
        return None
    peaks = np.array([singular[spans == span].max() for span in distinct])
    if np.any(peaks <= 0.0) or not np.all(np.isfinite(peaks)):
        return None
    slope, _ = np.polyfit(np.log(distinct), np.log(peaks), 1)
    return float(slope)


def verify_lemma(
    lemma_id: str,
    pair: PerturbationPair,
    sample_set: ArrayLike,
    quad: Optional[QuadConfig] = None,
    n: int = 1,
    orders: Sequence[int] = DEFAULT_LEMMA_ORDERS,
) -> LemmaReport:
    """
    Fit the constant of one intermediate estimate of the stability proofs.

    For every sample ``(t, s, x, y)`` the computed difference (left-hand side) and the bound
    without its constant (right-hand side) are evaluated, with :math:`\\varphi(t,s;y) =
    (\\int_t^s|b-b_\\varepsilon|_1(u,\\theta_{u,s}(y))du)^{\\gamma-\\delta} +
    (\\int_t^s|\\sigma-\\sigma_\\varepsilon|_\\gamma(u,\\theta_{u,s}(y))du)^{\\gamma-\\delta}` and
    :math:`\\psi(t,s;y) = |b-b_\\varepsilon|_1(t,\\theta_{t,s}(y)) +
    |\\sigma-\\sigma_\\varepsilon|_\\gamma(t,\\theta_{t,s}(y))`.

    ``main_terms``
        :math:`|\\partial^\\nu(\\tilde p - \\tilde p_\\varepsilon)|` against
        :math:`\\bar p(s-t)^{-|\\nu|/2}[I_b^{\\gamma-\\delta}(s-t)^{(\\delta-\\gamma)/2} +
        I_\\sigma^{\\gamma-\\delta}(s-t)^{\\delta-\\gamma}]` for every ``|nu|`` in ``orders``.
        The ``displayed`` variant integrates plain norms, the ``seminorm`` variant local
        seminorms.
    ``kernels``
        :math:`|H - H_\\varepsilon|` against
        :math:`\\bar p(\\psi(s-t)^{\\gamma/2-1} + \\varphi(s-t)^{\\delta-1-\\gamma/2})`.
    ``first_conv``
        :math:`|\\tilde p\\otimes H - \\tilde p_\\varepsilon\\otimes H_\\varepsilon|` against
        :math:`\\bar p/(\\delta-\\gamma/2)(B(1+\\delta-\\gamma,\\gamma/2)(s-t)^{\\delta-\\gamma/2}
        \\varphi + \\int_t^s\\psi(u,s;y)(s-u)^{\\gamma/2-1}du)`.
    ``nconv_mixed``
        :math:`|(\\tilde p_\\varepsilon\\otimes H_\\varepsilon^n)\\otimes(H - H_\\varepsilon)|`
        against the order-``n`` gamma-ratio combination of the two terms above.
    ``linf_main_terms``, ``linf_kernels``, ``linf_nconv``
        The same differences (``linf_nconv`` with order-``n`` series terms) against
        :math:`(\\Delta^\\infty_\\varepsilon)^\\gamma\\bar p` with the matching time factors.

    Parameters
    ----------
    lemma_id : str
        One of :data:`LEMMAS`.
    pair : PerturbationPair
        Models and bound parameters.
    sample_set : array-like
        Tuples ``(t, s, x, y)``, shape ``(n, 2 + 2 d)``.
    quad : QuadConfig, optional
        Quadrature settings.
    n : int, default 1
        Convolution order of ``nconv_mixed`` and ``linf_nconv``.
    orders : sequence of int, default (0, 1, 2)
        Derivative orders of the main-term lemmas.

    Returns
    -------
    LemmaReport

    Raises
    ------
    InvalidParam
        If the lemma is unknown.
    """
    if lemma_id not in LEMMAS:
        raise InvalidParam(f"Unknown lemma '{lemma_id}'. Known lemmas are: {', '.join(LEMMAS)}.")
    quad = quad or QuadConfig()
    d = pair.base.d
    samples = np.asarray(sample_set, dtype=float).reshape(-1, 2 + 2 * d)
    if samples.shape[0] == 0:
        raise EmptyGrid("The sample set is empty.")
    logger.info(f"Verifying '{lemma_id}' for {pair!r} on {samples.shape[0]} samples")
    terms = _LemmaTerms(pair, quad)
    gamma, delta = pair.gamma, pair.delta
    half = gamma / 2.0
    lhs: List[float] = []
    rhs: List[float] = []
    extra: List[float] = []
    singular: List[float] = []
    rows: List[Array] = []
    for sample in samples:
        t, s = float(sample[0]), float(sample[1])
        x, y = sample[2 : 2 + d], sample[2 + d :]
        check_interval(t, s)
        span = s - t
        bar = float(majorant_batch(pair.majorant, pair.base, t, s, x[None, :], y[None, :])[0])
        if lemma_id in ("main_terms", "linf_main_terms"):
            base_moments = proxy_moments(pair.base, t, s, x, y, quad.n_quad)
            perturbed_moments = proxy_moments(pair.perturbed, t, s, x, y, quad.n_quad)
            if lemma_id == "main_terms":
                plain = terms.flow_integrals(t, s, y, False)
                local = terms.flow_integrals(t, s, y, True)
                level = _main_term_bound(plain, span, gamma, delta)
                seminormed = _main_term_bound(local, span, gamma, delta)
            else:
                level = seminormed = terms.uniform_level(t, s)
            for order in orders:
                for nu in _multi_indices(d, order):
                    difference = abs(
                        proxy_derivative(base_moments, x, y, nu)
                        - proxy_derivative(perturbed_moments, x, y, nu)
                    )
                    scale = bar / span ** (order / 2.0)
                    lhs.append(difference)
                    rows.append(sample)
                    rhs.append(scale * level)
                    extra.append(scale * seminormed)
            continue
        if lemma_id in ("kernels", "linf_kernels"):
            difference = abs(kernel_H(pair.base, t, s, x, y) - kernel_H(pair.perturbed, t, s, x, y))
            if lemma_id == "kernels":
                psi = terms.psi(t, s, y)
                bound = bar * (
                    psi / span ** (1.0 - half) + terms.phi(t, s, y) / span ** (1.0 + half - delta)
                )
                scale = bar * psi
            else:
                bound = bar * terms.uniform_level(t, s) / span ** (1.0 - half)
                scale = bar
            # |H - H_eps| / (pbar psi) carries the (s - t)^(gamma/2 - 1) singularity
            singular.append(difference / scale if scale > 0.0 else 0.0)
        elif lemma_id == "first_conv":
            base = series_terms(pair.base, t, s, x, y[None, :], 1, quad)[1, 0]
            perturbed = series_terms(pair.perturbed, t, s, x, y[None, :], 1, quad)[1, 0]
            difference = abs(base - perturbed)
            bound = bar / (delta - half) * (
                beta_fn(1.0 + delta - gamma, half) * span ** (delta - half) * terms.phi(t, s, y)
                + terms.psi_integral(t, s, y)
            )
        elif lemma_id == "nconv_mixed":
            layer = LayerKernel(pair.perturbed, t, s, x, n, quad)
            kernels = _DifferenceKernel(
                KernelH(pair.base, quad.n_quad), KernelH(pair.perturbed, quad.n_quad)
            )
            difference = abs(convolve(layer, kernels, t, s, x, y, quad, pair.perturbed))
            gamma_power = gamma_fn(half) ** n
            bound = (
                span ** (n * half)
                * gamma_power
                / gamma_fn(1.0 + n * half)
                * bar
                * terms.psi_integral(t, s, y)
                + span ** (delta + (n - 1) * half)
                * gamma_power
                * gamma_fn(delta - half)
                / gamma_fn(1.0 + delta + (n - 1) * half)
                * bar
                * terms.phi(t, s, y)
            )
        else:
            base = series_terms(pair.base, t, s, x, y[None, :], n, quad)[n, 0]
            perturbed = series_terms(pair.perturbed, t, s, x, y[None, :], n, quad)[n, 0]
            difference = abs(base - perturbed)
            bound = (
                (n + 1)
                * terms.uniform_level(t, s)
                * span ** (n * half)
                * gamma_fn(half) ** n
                / gamma_fn(1.0 + n * half)
                * bar
            )
        lhs.append(difference)
        rhs.append(bound)
        rows.append(sample)
    lhs_arr, rhs_arr, rows_arr = np.array(lhs), np.array(rhs), np.array(rows).reshape(-1, 2 + 2 * d)
    variants: Dict[str, float] = {}
    if lemma_id == "main_terms":
        variants["displayed"] = float(_ratio(lhs_arr, rhs_arr).max(initial=0.0))
        variants["seminorm"] = float(_ratio(lhs_arr, np.array(extra)).max(initial=0.0))
    exponent_fit = None
    if lemma_id in ("kernels", "linf_kernels"):
        exponent_fit = _scaling_exponent(rows_arr, np.array(singular))
    report = LemmaReport(lemma_id, lhs_arr, rhs_arr, rows_arr, variants, exponent_fit)
    logger.debug(f"Lemma '{lemma_id}' fitted constant {report.fitted_C:.6g}")
    return report
