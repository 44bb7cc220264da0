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

"""Exceptions raised by the parametrix library."""

from typing import Optional


class ParametrixError(Exception):
    """Base class of every error raised by this package."""


class NumericalError(ParametrixError, ArithmeticError):
    """A computation produced a value that cannot be trusted."""


# Coefficient expressions and models


class ExpressionSyntaxError(ParametrixError, ValueError):
    """
    Coefficient expression could not be parsed.

    Parameters
    ----------
    message : str
        Description of the failure.
    offset : int
        Byte offset in the UTF-8 encoded source at which parsing failed.
    """

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self._offset = offset

    @property
    def offset(self) -> int:
        """Byte offset in the UTF-8 encoded source at which parsing failed."""
        return self._offset


class UnknownIdentifier(ParametrixError, ValueError):
    """Expression refers to a variable or function that does not exist."""


class ArityError(ParametrixError, ValueError):
    """Function in an expression was called with the wrong number of arguments."""


class EvaluationError(NumericalError):
    """Expression evaluation hit a division by zero or an undefined power."""


class UnknownModel(ParametrixError, ValueError):
    """Requested built-in model does not exist."""


class MissingParam(ParametrixError, ValueError):
    """Built-in model was requested without a required parameter."""


class InvalidParam(ParametrixError, ValueError):
    """Parameter value is outside its admissible range."""


class DimensionMismatch(ParametrixError, ValueError):
    """Array or model dimensions are inconsistent."""


# Grids, intervals and quadrature


class EmptyGrid(ParametrixError, ValueError):
    """A grid, point set or time set is empty."""


class EmptyComparisons(ParametrixError, ValueError):
    """No usable comparison points were supplied to a seminorm estimate."""


class UnsortedNodes(ParametrixError, ValueError):
    """Time nodes are not sorted or do not span the requested interval."""


class DegenerateInterval(ParametrixError, ValueError):
    """Time interval is empty or reversed."""

    def __init__(self, t: float, s: float, message: Optional[str] = None):
        super().__init__(message or f"Expected t < s, got t={t!r} and s={s!r}.")


class OutOfInterval(ParametrixError, ValueError):
    """Point lies outside the interval it must belong to."""


class UnsupportedOrder(ParametrixError, ValueError):
    """Derivative order is higher than the implemented maximum."""


class NonPositiveArgument(ParametrixError, ValueError):
    """Special function argument must be strictly positive."""


class QuadratureBudgetExceeded(NumericalError):
    """Quadrature would need more nodes than the configured budget."""


class NonFiniteIntegrand(NumericalError):
    """Integrand returned NaN or infinity at a quadrature node."""


class MaxDepthExceeded(NumericalError):
    """Adaptive quadrature reached its recursion limit before meeting the tolerance."""


# Flows, proxies and simulation


class NonFiniteState(NumericalError):
    """ODE integrator produced NaN or infinity."""


class NonSPD(NumericalError):
    """Covariance matrix is not symmetric positive definite within tolerance."""


class NonFinitePath(NumericalError):
    """Simulated path produced NaN or infinity."""


# Configuration


class ConfigError(ParametrixError, ValueError):
    """Run configuration is malformed or has an unsupported version."""
