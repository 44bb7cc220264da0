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

"""Parametrix transition densities of diffusions and their stability under perturbations."""

import importlib.metadata as importlib_metadata

from ._assumptions import AssumptionReport, check_assumptions
from ._config import RunConfig
from ._exceptions import (
    ArityError,
    ConfigError,
    DegenerateInterval,
    DimensionMismatch,
    EmptyComparisons,
    EmptyGrid,
    EvaluationError,
    ExpressionSyntaxError,
    InvalidParam,
    MaxDepthExceeded,
    MissingParam,
    NonFiniteIntegrand,
    NonFinitePath,
    NonFiniteState,
    NonPositiveArgument,
    NonSPD,
    NumericalError,
    OutOfInterval,
    ParametrixError,
    QuadratureBudgetExceeded,
    UnknownIdentifier,
    UnknownModel,
    UnsortedNodes,
    UnsupportedOrder,
)
from ._expressions import CoefficientExpr, parse_expr
from ._flow import FlowPath, flow_gap, flow_path, flow_point, linear_moments
from ._models import CoefficientField, DiffusionSpec, builtin_model
from ._oracle import (
    McConfig,
    adaptive_integrate,
    em_density,
    exact_linear_density,
    simulate_endpoints,
)
from ._parametrix import (
    KernelH,
    LayerKernel,
    MajorantKernel,
    ProxyKernel,
    QuadConfig,
    SeriesApprox,
    convolve,
    convolve_space,
    kernel_H,
    series_density,
    series_density_grid,
    series_terms,
    tail_bound,
)
from ._perturbation import (
    L1Bound,
    LemmaReport,
    Maxima,
    PerturbationPair,
    PerturbationReport,
    beta_weight,
    delta_diagonal,
    delta_l1,
    delta_linf,
    density_diff_l1,
    density_diff_terms,
    diagonal_samples,
    fit_holder_constant,
    holder_beta_norm,
    l1_order_bound,
    l1_theorem_bound,
    l1_theorem_check,
    linf_theorem_check,
    local_seminorm,
    lq_lp_norm,
    maxima,
    nonuniform_lower_bound,
    oscillating_pair,
    oscillating_rate_exponent,
    oscillation_tail_integral,
    random_samples,
    uniform_time_grid,
    verify_lemma,
)
from ._proxy import (
    MajorantParams,
    ProxyMoments,
    majorant_density,
    proxy_density,
    proxy_derivative,
    proxy_moments,
)
from ._special import beta_fn, gamma_fn, gamma_ratio_bound, log_gamma

__all__ = [
    "AssumptionReport",
    "check_assumptions",
    "RunConfig",
    "ArityError",
    "ConfigError",
    "DegenerateInterval",
    "DimensionMismatch",
    "EmptyComparisons",
    "EmptyGrid",
    "EvaluationError",
    "ExpressionSyntaxError",
    "InvalidParam",
    "MaxDepthExceeded",
    "MissingParam",
    "NonFiniteIntegrand",
    "NonFinitePath",
    "NonFiniteState",
    "NonPositiveArgument",
    "NonSPD",
    "NumericalError",
    "OutOfInterval",
    "ParametrixError",
    "QuadratureBudgetExceeded",
    "UnknownIdentifier",
    "UnknownModel",
    "UnsortedNodes",
    "UnsupportedOrder",
    "CoefficientExpr",
    "parse_expr",
    "FlowPath",
    "flow_gap",
    "flow_path",
    "flow_point",
    "linear_moments",
    "CoefficientField",
    "DiffusionSpec",
    "builtin_model",
    "McConfig",
    "adaptive_integrate",
    "em_density",
    "exact_linear_density",
    "simulate_endpoints",
    "KernelH",
    "LayerKernel",
    "MajorantKernel",
    "ProxyKernel",
    "QuadConfig",
    "SeriesApprox",
    "convolve",
    "convolve_space",
    "kernel_H",
    "series_density",
    "series_density_grid",
    "series_terms",
    "tail_bound",
    "L1Bound",
    "LemmaReport",
    "Maxima",
    "PerturbationPair",
    "PerturbationReport",
    "beta_weight",
    "delta_diagonal",
    "delta_l1",
    "delta_linf",
    "density_diff_l1",
    "density_diff_terms",
    "diagonal_samples",
    "fit_holder_constant",
    "holder_beta_norm",
    "l1_order_bound",
    "l1_theorem_bound",
    "l1_theorem_check",
    "linf_theorem_check",
    "local_seminorm",
    "lq_lp_norm",
    "maxima",
    "nonuniform_lower_bound",
    "oscillating_pair",
    "oscillating_rate_exponent",
    "oscillation_tail_integral",
    "random_samples",
    "uniform_time_grid",
    "verify_lemma",
    "MajorantParams",
    "ProxyMoments",
    "majorant_density",
    "proxy_density",
    "proxy_derivative",
    "proxy_moments",
    "beta_fn",
    "gamma_fn",
    "gamma_ratio_bound",
    "log_gamma",
]
__version__ = importlib_metadata.version(__name__.replace(".", "-"))
