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

"""Diffusion models: coefficient fields, model specifications and built-in models."""

import math
from typing import Any, Dict, Iterable, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.typing import ArrayLike, NDArray

from ._exceptions import (
    DimensionMismatch,
    InvalidParam,
    MissingParam,
    UnknownIdentifier,
    UnknownModel,
)
from ._expressions import CoefficientExpr, parse_expr
from ._logger import logger

BUILTIN_MODELS = ("heat", "linear_drift", "ou", "oscillating_pair")

DEFAULT_HORIZON = 1.0

ExprLike = Union[str, CoefficientExpr]


def _as_expr(value: Union[ExprLike, float], dimension: int) -> CoefficientExpr:
    if isinstance(value, CoefficientExpr):
        if value.max_space_index > dimension:
            raise UnknownIdentifier(
                f"Expression '{value}' uses x{value.max_space_index}, but the model dimension "
                f"is {dimension}."
            )
        return value
    if isinstance(value, (int, float)):
        value = repr(float(value))
    return parse_expr(value, dimension)


class CoefficientField:
    """
    Vector- or matrix-valued coefficient made of one expression per entry.

    Parameters
    ----------
    entries : array-like of str or CoefficientExpr
        Nested sequence of shape ``(d,)`` or ``(d, d)``.
    dimension : int
        Spatial dimension ``d``.
    """

    def __init__(self, entries: Any, dimension: int):
        raw = np.empty(np.shape(entries), dtype=object)
        if raw.ndim not in (1, 2):
            raise DimensionMismatch(
                f"Coefficient must be a vector or a matrix, got shape {raw.shape}."
            )
        expected = (dimension,) * raw.ndim
        if raw.shape != expected:
            raise DimensionMismatch(f"Expected a coefficient of shape {expected}, got {raw.shape}.")
        for index in np.ndindex(raw.shape):
            item = entries
            for i in index:
                item = item[i]
            raw[index] = _as_expr(item, dimension)
        self._entries = raw
        self._dimension = dimension

    @property
    def shape(self) -> Tuple[int, ...]:
        """Shape of the coefficient value at a single point."""
        return tuple(self._entries.shape)

    @property
    def entries(self) -> NDArray[np.object_]:
        """Entry expressions."""
        return self._entries.copy()

    @property
    def is_constant(self) -> bool:
        """Whether every entry is a constant."""
        return all(expr.is_constant for expr in self._entries.flat)

    def __call__(self, t: ArrayLike, x: ArrayLike) -> NDArray[np.float64]:
        """
        Evaluate every entry.

        Returns an array of shape ``batch + self.shape``, where ``batch`` is the broadcast of
        ``t`` and ``x[..., 0]``.
        """
        x_arr = np.asarray(x, dtype=float)
        values = [expr(t, x_arr) for expr in self._entries.flat]
        stacked = np.stack(np.broadcast_arrays(*values), axis=-1)
        return stacked.reshape(stacked.shape[:-1] + self.shape)

    def to_strings(self) -> Any:
        """Entry expressions as canonical text, nested like the input."""
        return np.vectorize(str, otypes=[object])(self._entries).tolist()

    def __repr__(self) -> str:
        """Printable representation of the object."""
        return f"<{self.__class__.__name__} shape: {self.shape}>"


class DiffusionSpec:
    """
    Specification of a diffusion :math:`dX_t = b(t, X_t)dt + \\sigma(t, X_t)dW_t`.

    Read-only. Build instances directly from expressions, or with :func:`builtin_model`.

    Parameters
    ----------
    drift : sequence of str or CoefficientExpr
        The ``d`` drift components.
    diffusion : nested sequence of str or CoefficientExpr
        The ``d`` by ``d`` diffusion matrix.
    gamma : float
        Hölder exponent of the diffusion coefficient, in ``(0, 1]``.
    lipschitz_K : float
        Constant bounding the Lipschitz and growth ratios of the drift and the Hölder ratio of
        the diffusion coefficient.
    ellipticity_Lambda : float
        Ellipticity constant, at least 1.
    horizon_T : float
        Final time.
    name : str, optional
        Label used in logs and reports.
    drift_matrix : nested sequence of str, optional
        ``d`` by ``d`` time-dependent matrix ``G(t)`` if the drift is exactly ``G(t) x``. Enables
        closed-form linear densities.

    Raises
    ------
    InvalidParam
        If a constant is out of range.
    DimensionMismatch
        If a coefficient does not have the expected shape.
    """

    def __init__(
        self,
        drift: Sequence[ExprLike],
        diffusion: Sequence[Sequence[ExprLike]],
        gamma: float = 1.0,
        lipschitz_K: float = 1.0,
        ellipticity_Lambda: float = 1.0,
        horizon_T: float = DEFAULT_HORIZON,
        name: Optional[str] = None,
        drift_matrix: Optional[Sequence[Sequence[ExprLike]]] = None,
    ):
        dimension = len(drift)
        if dimension < 1:
            raise DimensionMismatch("Drift must have at least one component.")
        if not 0.0 < gamma <= 1.0:
            raise InvalidParam(f"gamma must be in (0, 1], got {gamma}.")
        if not lipschitz_K > 0.0:
            raise InvalidParam(f"lipschitz_K must be positive, got {lipschitz_K}.")
        if not ellipticity_Lambda >= 1.0:
            raise InvalidParam(f"ellipticity_Lambda must be at least 1, got {ellipticity_Lambda}.")
        if not horizon_T > 0.0:
            raise InvalidParam(f"horizon_T must be positive, got {horizon_T}.")
        self._d = dimension
        self._drift = CoefficientField(list(drift), dimension)
        self._diffusion = CoefficientField([list(row) for row in diffusion], dimension)
        if self._diffusion.shape != (dimension, dimension):
            raise DimensionMismatch(
                f"Diffusion must be a {dimension}x{dimension} matrix, got {self._diffusion.shape}."
            )
        self._drift_matrix: Optional[CoefficientField] = None
        if drift_matrix is not None:
            self._drift_matrix = CoefficientField([list(row) for row in drift_matrix], dimension)
            if self._drift_matrix.shape != (dimension, dimension):
                raise DimensionMismatch(
                    "Drift matrix must be a square matrix of the model dimension."
                )
            if any(expr.max_space_index for expr in self._drift_matrix.entries.flat):
                raise InvalidParam("Drift matrix entries may depend on time only.")
        self._gamma = float(gamma)
        self._K = float(lipschitz_K)
        self._Lambda = float(ellipticity_Lambda)
        self._T = float(horizon_T)
        self._name = name or "custom"

    @property
    def d(self) -> int:
        """Spatial dimension."""
        return self._d

    @property
    def gamma(self) -> float:
        """Hölder exponent of the diffusion coefficient."""
        return self._gamma

    @property
    def lipschitz_K(self) -> float:
        """Declared regularity and growth constant."""
        return self._K

    @property
    def ellipticity_Lambda(self) -> float:
        """Declared ellipticity constant."""
        return self._Lambda

    @property
    def horizon_T(self) -> float:
        """Final time."""
        return self._T

    @property
    def name(self) -> str:
        """Model label."""
        return self._name

    @property
    def drift_field(self) -> CoefficientField:
        """Drift coefficient expressions."""
        return self._drift

    @property
    def diffusion_field(self) -> CoefficientField:
        """Diffusion coefficient expressions."""
        return self._diffusion

    @property
    def drift_matrix(self) -> Optional[CoefficientField]:
        """Matrix ``G(t)`` of an exactly linear drift ``G(t) x``, or ``None``."""
        return self._drift_matrix

    @property
    def is_linear(self) -> bool:
        """Whether the drift is exactly linear and the diffusion coefficient constant."""
        return self._drift_matrix is not None and self._diffusion.is_constant

    def drift(self, t: ArrayLike, x: ArrayLike) -> NDArray[np.float64]:
        """Drift ``b(t, x)``, shape ``batch + (d,)``."""
        return self._drift(t, x)

    def sigma(self, t: ArrayLike, x: ArrayLike) -> NDArray[np.float64]:
        """Diffusion coefficient ``sigma(t, x)``, shape ``batch + (d, d)``."""
        return self._diffusion(t, x)

    def a(self, t: ArrayLike, x: ArrayLike) -> NDArray[np.float64]:
        """Diffusion matrix ``a = sigma sigma^T``, shape ``batch + (d, d)``."""
        sigma = self.sigma(t, x)
        return np.einsum("...ik,...jk->...ij", sigma, sigma)

    def to_mapping(self) -> Dict[str, Any]:
        """Serializable description of the model, as used in run configurations."""
        mapping: Dict[str, Any] = {
            "drift": self._drift.to_strings(),
            "diffusion": self._diffusion.to_strings(),
            "gamma": self._gamma,
            "lipschitz_K": self._K,
            "ellipticity_Lambda": self._Lambda,
            "horizon_T": self._T,
        }
        if self._drift_matrix is not None:
            mapping["drift_matrix"] = self._drift_matrix.to_strings()
        return mapping

    @classmethod
    def from_mapping(
        cls, mapping: Mapping[str, Any], name: Optional[str] = None
    ) -> "DiffusionSpec":
        """Build a model from the mapping produced by :meth:`to_mapping`."""
        required = ("drift", "diffusion")
        for key in required:
            if key not in mapping:
                raise MissingParam(f"Model definition is missing '{key}'.")
        known = set(required) | {
            "gamma",
            "lipschitz_K",
            "ellipticity_Lambda",
            "horizon_T",
            "drift_matrix",
        }
        unknown = set(mapping) - known
        if unknown:
            raise InvalidParam(f"Unknown model fields: {', '.join(sorted(unknown))}.")
        return cls(
            drift=mapping["drift"],
            diffusion=mapping["diffusion"],
            gamma=mapping.get("gamma", 1.0),
            lipschitz_K=mapping.get("lipschitz_K", 1.0),
            ellipticity_Lambda=mapping.get("ellipticity_Lambda", 1.0),
            horizon_T=mapping.get("horizon_T", DEFAULT_HORIZON),
            name=name,
            drift_matrix=mapping.get("drift_matrix"),
        )

    def __repr__(self) -> str:
        """Printable representation of the object."""
        return f"<{self.__class__.__name__} name: {self._name}, d: {self._d}>"


def _diagonal(value: str, dimension: int) -> list[list[str]]:
    return [[value if i == j else "0" for j in range(dimension)] for i in range(dimension)]


def _coordinates(dimension: int) -> list[str]:
    return [f"x{i + 1}" for i in range(dimension)]


class _Params:
    def __init__(self, model: str, params: Mapping[str, Any], allowed: Iterable[str]):
        unknown = set(params) - set(allowed)
        if unknown:
            raise InvalidParam(
                f"Unknown parameters for model '{model}': {', '.join(sorted(unknown))}."
            )
        self._model = model
        self._params = params

    def number(self, key: str, default: Optional[float] = None) -> float:
        if key not in self._params:
            if default is None:
                raise MissingParam(f"Model '{self._model}' requires parameter '{key}'.")
            return default
        try:
            value = float(self._params[key])
        except (TypeError, ValueError) as e:
            raise InvalidParam(
                f"Parameter '{key}' of model '{self._model}' must be a number, "
                f"got {self._params[key]!r}."
            ) from e
        if not math.isfinite(value):
            raise InvalidParam(f"Parameter '{key}' of model '{self._model}' must be finite.")
        return value

    def positive(self, key: str, default: Optional[float] = None) -> float:
        value = self.number(key, default)
        if value <= 0.0:
            raise InvalidParam(f"Parameter '{key}' of model '{self._model}' must be positive.")
        return value

    def dimension(self) -> int:
        value = self.number("d", 1.0)
        if value != int(value) or value < 1:
            raise InvalidParam(f"Dimension of model '{self._model}' must be a positive integer.")
        return int(value)


def oscillating_perturbation(eps: float, q: float) -> str:
    """
    Drift perturbation ``exp(-t^2/(q eps)) |sin(t/sqrt(eps))|^(2/q) cos(x1)`` as expression text.

    The power of the sine is taken on its absolute value, so the perturbation is defined for
    every ``q`` and the factor in front of ``cos(x1)`` is nonnegative.
    """
    return f"exp(-t^2/({q!r}*{eps!r}))*abs(sin(t/sqrt({eps!r})))^(2/{q!r})*cos(x1)"


def builtin_model(
    name: str, params: Optional[Mapping[str, Any]] = None
) -> Union[DiffusionSpec, Tuple[DiffusionSpec, DiffusionSpec]]:
    """
    Build one of the built-in models.

    * ``heat``: zero drift and identity diffusion. Parameters ``d`` and ``T``.
    * ``linear_drift`` and ``ou``: drift ``rate * x`` and diffusion ``sigma * I``. Parameters
      ``sigma`` (required), ``rate`` (default 1), ``d`` and ``T``.
    * ``oscillating_pair``: one-dimensional base model with drift ``x`` and its perturbation
      ``x + exp(-t^2/(q eps)) |sin(t/sqrt(eps))|^(2/q) cos(x)``, both with diffusion ``sigma``.
      Parameters ``eps`` and ``q`` (required), ``sigma`` (default 1) and ``T``. Returns the pair
      ``(base, perturbed)``.

    Parameters
    ----------
    name : str
        Model name.
    params : mapping, optional
        Model parameters.

    Returns
    -------
    DiffusionSpec or tuple of DiffusionSpec

    Raises
    ------
    UnknownModel
        If ``name`` is not a built-in model.
    MissingParam
        If a required parameter is missing.
    InvalidParam
        If a parameter is out of range, for example ``q < 2``.

    Examples
    --------
    >>> builtin_model("heat", {"d": 1})
    <DiffusionSpec name: heat, d: 1>
    >>> base, perturbed = builtin_model("oscillating_pair", {"eps": 1, "q": 2.01, "sigma": 1})
    """
    params = params or {}
    logger.debug(f"Building built-in model '{name}' with parameters {dict(params)}")
    if name == "heat":
        p = _Params(name, params, ("d", "T"))
        d = p.dimension()
        return DiffusionSpec(
            drift=["0"] * d,
            diffusion=_diagonal("1", d),
            gamma=1.0,
            lipschitz_K=1.0,
            ellipticity_Lambda=1.0,
            horizon_T=p.positive("T", DEFAULT_HORIZON),
            name=name,
            drift_matrix=_diagonal("0", d),
        )
    if name in ("linear_drift", "ou"):
        p = _Params(name, params, ("d", "T", "sigma", "rate"))
        d = p.dimension()
        sigma = p.positive("sigma")
        rate = p.number("rate", 1.0)
        drift = _coordinates(d) if rate == 1.0 else [f"{rate!r}*{x}" for x in _coordinates(d)]
        return DiffusionSpec(
            drift=drift,
            diffusion=_diagonal(repr(sigma), d),
            gamma=1.0,
            lipschitz_K=abs(rate) if rate != 0.0 else 1.0,
            ellipticity_Lambda=max(sigma**2, sigma**-2),
            horizon_T=p.positive("T", DEFAULT_HORIZON),
            name=name,
            drift_matrix=_diagonal(repr(rate), d),
        )
    if name == "oscillating_pair":
        p = _Params(name, params, ("d", "T", "sigma", "eps", "q"))
        if p.dimension() != 1:
            raise InvalidParam("The oscillating pair is one-dimensional.")
        eps = p.positive("eps")
        q = p.positive("q")
        if q < 2.0:
            raise InvalidParam(
                f"Parameter 'q' of the oscillating pair must be at least 2, got {q}."
            )
        sigma = p.positive("sigma", 1.0)
        common: Dict[str, Any] = {
            "diffusion": [[repr(sigma)]],
            "gamma": 1.0,
            "lipschitz_K": 2.0,
            "ellipticity_Lambda": max(sigma**2, sigma**-2),
            "horizon_T": p.positive("T", DEFAULT_HORIZON),
        }
        base = DiffusionSpec(drift=["x1"], name="oscillating_base", drift_matrix=[["1"]], **common)
        perturbed = DiffusionSpec(
            drift=[f"x1 + {oscillating_perturbation(eps, q)}"],
            name=f"oscillating_eps_{eps!r}",
            **common,
        )
        return base, perturbed
    raise UnknownModel(
        f"Unknown model '{name}'. Built-in models are: {', '.join(BUILTIN_MODELS)}."
    )
