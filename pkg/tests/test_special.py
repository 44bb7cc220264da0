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

import math

import numpy as np
import pytest
from scipy import special

from ansys.math.parametrix import (
    NonPositiveArgument,
    beta_fn,
    gamma_fn,
    gamma_ratio_bound,
    log_gamma,
)
from ansys.math.parametrix._special import (
    beta_rule,
    composite_gauss_legendre,
    gauss_legendre,
    singular_rule,
)


class TestGamma:
    @pytest.mark.parametrize("z", [0.1, 0.5, 1.0, 1.5, 2.0, 3.7, 10.0, 50.5, 120.0, 160.0])
    def test_against_scipy(self, z):
        assert gamma_fn(z) == pytest.approx(special.gamma(z), rel=1e-13)

    def test_half(self):
        assert gamma_fn(0.5) ** 2 == pytest.approx(math.pi, rel=1e-14)

    @pytest.mark.parametrize("n", range(1, 12))
    def test_factorials(self, n):
        assert gamma_fn(n) == pytest.approx(math.factorial(n - 1), rel=1e-14)

    def test_overflow_gives_infinity(self):
        assert gamma_fn(200.0) == math.inf

    @pytest.mark.parametrize("z", [0.3, 4.0, 200.0, 1e4])
    def test_log_gamma(self, z):
        assert log_gamma(z) == pytest.approx(math.lgamma(z), rel=1e-13)

    @pytest.mark.parametrize("z", [0.0, -1.0, -0.5, math.nan, math.inf])
    def test_non_positive_argument(self, z):
        with pytest.raises(NonPositiveArgument):
            gamma_fn(z)


class TestBeta:
    def test_known_value(self):
        assert beta_fn(1.0, 0.5) == pytest.approx(2.0, rel=1e-14)

    @pytest.mark.parametrize("a, b", [(0.5, 0.5), (2.0, 3.0), (0.3, 7.5)])
    def test_against_scipy(self, a, b):
        assert beta_fn(a, b) == pytest.approx(special.beta(a, b), rel=1e-12)

    def test_symmetric(self):
        assert beta_fn(0.7, 2.2) == pytest.approx(beta_fn(2.2, 0.7), rel=1e-14)

    @pytest.mark.parametrize("a, b", [(0.0, 1.0), (1.0, -2.0)])
    def test_non_positive_argument(self, a, b):
        with pytest.raises(NonPositiveArgument):
            beta_fn(a, b)


def test_gamma_ratio_bound_order_zero_is_constant():
    assert gamma_ratio_bound(3.0, 0, 1.0, 0.5) == pytest.approx(3.0)


def test_gamma_ratio_bound_decays():
    values = [gamma_ratio_bound(2.0, r, 1.0, 1.0) for r in range(40)]
    assert values[-1] < values[10] < values[0] * 1e3


class TestRules:
    def test_gauss_legendre_polynomial(self):
        nodes, weights = gauss_legendre(-1.0, 2.0, 5)
        assert np.all(np.diff(nodes) > 0)
        assert weights @ nodes**9 == pytest.approx((2.0**10 - 1.0) / 10.0, rel=1e-13)

    def test_composite_panels(self):
        nodes, weights = composite_gauss_legendre(0.0, 1.0, 4, 0.3)
        assert nodes.size == 16
        assert weights.sum() == pytest.approx(1.0, rel=1e-14)
        assert weights @ np.cos(nodes) == pytest.approx(math.sin(1.0), rel=1e-12)

    @pytest.mark.parametrize("side", ["left", "right"])
    def test_singular_rule_inverse_square_root(self, side):
        nodes, weights = singular_rule(0.0, 1.0, 12, 0.5, side)
        distance = nodes if side == "left" else 1.0 - nodes
        assert np.all(np.diff(nodes) > 0)
        assert weights @ distance**-0.5 == pytest.approx(2.0, rel=1e-12)

    def test_beta_rule_weights_sum_to_one(self):
        nodes, weights = beta_rule(0.2, 1.0, 0.6, 10)
        assert weights.sum() == pytest.approx(1.0, rel=1e-14)
        assert np.all(weights > 0)
        assert np.all((nodes > 0.2) & (nodes < 1.0))

    def test_beta_rule_mean(self):
        nodes, weights = beta_rule(0.0, 1.5, 1.0, 8)
        assert weights @ nodes == pytest.approx(1.5 - 1.5 / 3.0, rel=1e-13)

    def test_beta_rule_clusters_towards_upper_end(self):
        nodes, weights = beta_rule(0.0, 1.0, 1.0, 16)
        assert weights[nodes > 0.5].sum() > 0.5
