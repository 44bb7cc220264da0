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
from scipy import stats

from ansys.math.parametrix import (
    DegenerateInterval,
    InvalidParam,
    KernelH,
    LayerKernel,
    MajorantKernel,
    MajorantParams,
    ProxyKernel,
    QuadConfig,
    QuadratureBudgetExceeded,
    convolve,
    convolve_space,
    flow_point,
    kernel_H,
    majorant_density,
    proxy_density,
    proxy_moments,
    series_density,
    series_density_grid,
    series_terms,
    tail_bound,
)
from ansys.math.parametrix._parametrix import fit_term_constant


class TestQuadConfig:
    def test_defaults(self):
        quad = QuadConfig()
        assert quad.n_time == 24
        assert quad.n_space == 61
        assert quad.space_radius == 6.0
        assert quad.power(1.0) == 0.5
        assert quad.n_mc is None

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"n_time": 4},
            {"n_space": 2},
            {"space_radius": 3.0},
            {"singularity_power": 0.0},
            {"singularity_power": 1.5},
            {"n_mc": 0},
            {"n_quad": 4},
        ],
    )
    def test_invalid(self, kwargs):
        with pytest.raises(InvalidParam):
            QuadConfig(**kwargs)

    def test_replace(self, coarse_quad):
        finer = coarse_quad.replace(n_space=41)
        assert finer.n_space == 41
        assert finer.n_time == coarse_quad.n_time
        assert finer != coarse_quad
        assert finer.replace(n_space=31) == coarse_quad

    def test_explicit_power(self):
        assert QuadConfig(singularity_power=0.25).power(1.0) == 0.25


class TestKernel:
    def test_heat_kernel_vanishes(self, heat):
        assert kernel_H(heat, 0.0, 1.0, [0.3], [-0.4]) == 0.0

    def test_vanishes_on_the_flow(self, variable_sigma):
        y = np.array([0.6])
        theta = flow_point(variable_sigma, 0.2, 0.9, y)
        assert kernel_H(variable_sigma, 0.2, 0.9, theta, y) == pytest.approx(0.0, abs=1e-12)

    def test_nonzero_away_from_the_flow(self, variable_sigma):
        assert kernel_H(variable_sigma, 0.2, 0.9, [1.5], [0.6]) != 0.0

    def test_batch_matches_scalar(self, variable_sigma):
        xs = np.linspace(-1.0, 1.0, 4)[:, None]
        batch = KernelH(variable_sigma)(0.0, 0.5, xs, [0.2])
        for x, value in zip(xs, batch):
            assert value == pytest.approx(kernel_H(variable_sigma, 0.0, 0.5, x, [0.2]), rel=1e-12)

    def test_degenerate_interval(self, variable_sigma):
        with pytest.raises(DegenerateInterval):
            kernel_H(variable_sigma, 0.5, 0.5, [0.0], [0.0])

    def test_proxy_kernel_matches_proxy_density(self, variable_sigma):
        moments = proxy_moments(variable_sigma, 0.1, 0.8, [0.3], [-0.2])
        value = ProxyKernel(variable_sigma)(0.1, 0.8, [0.3], [-0.2])[0]
        assert value == pytest.approx(proxy_density(moments, [0.3], [-0.2]), rel=1e-12)

    def test_majorant_kernel_matches_majorant_density(self, variable_sigma):
        params = MajorantParams.for_spec(variable_sigma)
        ys = np.array([[-0.5], [0.0], [0.7]])
        values = MajorantKernel(params, variable_sigma)(0.1, 0.8, [0.3], ys)
        expected = [majorant_density(params, variable_sigma, 0.1, 0.8, [0.3], y) for y in ys]
        np.testing.assert_allclose(values, expected, rtol=1e-12)


class TestConvolution:
    def test_space_convolution_of_heat_kernels(self, heat):
        kernel = ProxyKernel(heat)
        value = convolve_space(kernel, kernel, 0.0, 0.3, 1.0, [0.2], [0.5], QuadConfig(), heat)
        assert value == pytest.approx(stats.norm(0.2).pdf(0.5), rel=1e-8)

    def test_time_space_convolution_of_heat_kernels(self, heat):
        kernel = ProxyKernel(heat)
        value = convolve(kernel, kernel, 0.0, 0.8, [0.2], [0.5], QuadConfig(), heat)
        expected = 0.8 * stats.norm(0.2, math.sqrt(0.8)).pdf(0.5)
        assert value == pytest.approx(expected, rel=1e-6)

    def test_two_dimensional_convolution(self, heat_2d):
        kernel = ProxyKernel(heat_2d)
        quad = QuadConfig(n_time=8, n_space=41)
        value = convolve_space(
            kernel, kernel, 0.0, 0.5, 1.0, [0.0, 0.0], [0.3, -0.1], quad, heat_2d
        )
        expected = stats.multivariate_normal(cov=np.eye(2)).pdf([0.3, -0.1])
        assert value == pytest.approx(expected, rel=1e-6)

    def test_monte_carlo_space_integral(self, heat):
        kernel = ProxyKernel(heat)
        quad = QuadConfig(n_mc=20000, seed=3)
        value = convolve_space(kernel, kernel, 0.0, 0.5, 1.0, [0.0], [0.4], quad, heat)
        assert value == pytest.approx(stats.norm.pdf(0.4), rel=0.05)
        again = convolve_space(kernel, kernel, 0.0, 0.5, 1.0, [0.0], [0.4], quad, heat)
        assert again == value

    def test_grid_budget(self, heat_2d):
        kernel = ProxyKernel(heat_2d)
        quad = QuadConfig(n_space=101, max_grid_points=5000)
        with pytest.raises(QuadratureBudgetExceeded):
            convolve_space(kernel, kernel, 0.0, 0.5, 1.0, [0.0, 0.0], [0.0, 0.0], quad, heat_2d)

    def test_degenerate_middle_time(self, heat):
        kernel = ProxyKernel(heat)
        with pytest.raises(DegenerateInterval):
            convolve_space(kernel, kernel, 0.0, 1.0, 1.0, [0.0], [0.0], QuadConfig(), heat)


class TestSeries:
    def test_heat_series_is_the_proxy(self, heat, coarse_quad):
        approx = series_density(heat, 0.0, 1.0, [0.0], [0.5], N=2, quad=coarse_quad)
        assert approx.terms[0] == pytest.approx(stats.norm.pdf(0.5), rel=1e-12)
        assert approx.terms[1:] == (0.0, 0.0)
        assert approx.total == approx.terms[0]
        assert approx.tail_bound == 0.0
        assert approx.fitted_C == 0.0
        assert not approx.flagged
        assert approx.order == 2

    def test_order_zero_is_the_proxy(self, variable_sigma, coarse_quad):
        approx = series_density(variable_sigma, 0.0, 0.5, [0.1], [0.4], N=0, quad=coarse_quad)
        moments = proxy_moments(variable_sigma, 0.0, 0.5, [0.1], [0.4])
        assert approx.terms == (pytest.approx(proxy_density(moments, [0.1], [0.4]), rel=1e-12),)
        assert approx.tail_bound > 0.0

    def test_first_term_bound_is_tight(self, variable_sigma, coarse_quad):
        approx = series_density(variable_sigma, 0.0, 0.5, [0.1], [0.4], N=2, quad=coarse_quad)
        assert approx.term_bound(1) == pytest.approx(abs(approx.terms[1]), rel=1e-9)
        assert math.isfinite(approx.tail_bound)

    def test_grid_matches_single_points(self, variable_sigma, coarse_quad):
        ys = np.array([[-0.3], [0.4]])
        grid = series_density_grid(variable_sigma, 0.0, 0.5, [0.1], ys, N=1, quad=coarse_quad)
        single = series_density(variable_sigma, 0.0, 0.5, [0.1], ys[1], N=1, quad=coarse_quad)
        assert grid[1].terms == pytest.approx(single.terms, rel=1e-12)
        assert len(grid) == 2

    def test_terms_shape(self, variable_sigma, coarse_quad):
        terms = series_terms(
            variable_sigma, 0.0, 0.5, [0.1], np.zeros((3, 1)), N=2, quad=coarse_quad
        )
        assert terms.shape == (3, 3)
        assert np.all(np.isfinite(terms))

    def test_custom_majorant(self, heat, coarse_quad):
        approx = series_density(
            heat, 0.0, 1.0, [0.0], [0.0], N=0, quad=coarse_quad, majorant=MajorantParams(3.0)
        )
        assert approx.majorant == pytest.approx(stats.norm(scale=3.0).pdf(0.0))

    def test_negative_order(self, heat):
        with pytest.raises(InvalidParam):
            series_density(heat, 0.0, 1.0, [0.0], [0.0], N=-1)

    def test_degenerate_interval(self, heat):
        with pytest.raises(DegenerateInterval):
            series_density(heat, 1.0, 0.5, [0.0], [0.0])

    def test_layer_budget(self, variable_sigma, coarse_quad):
        with pytest.raises(QuadratureBudgetExceeded, match="Reduce n_space or n_time"):
            series_density(
                variable_sigma,
                0.0,
                0.5,
                [0.1],
                [0.4],
                N=2,
                quad=coarse_quad.replace(max_grid_points=1000),
            )


class TestLayerKernel:
    def test_order_zero_is_the_proxy(self, variable_sigma, coarse_quad):
        layer = LayerKernel(variable_sigma, 0.0, 1.0, [0.2], 0, coarse_quad)
        z = np.array([[0.0], [0.5]])
        expected = ProxyKernel(variable_sigma, coarse_quad.n_quad)(0.0, 0.6, [0.2], z)
        np.testing.assert_allclose(layer(0.0, 0.6, [0.2], z), expected, rtol=1e-12)

    def test_heat_layers_vanish(self, heat, coarse_quad):
        layer = LayerKernel(heat, 0.0, 1.0, [0.0], 1, coarse_quad)
        np.testing.assert_array_equal(layer(0.0, 0.5, [0.0], np.zeros((2, 1))), 0.0)

    def test_negative_order(self, heat):
        with pytest.raises(InvalidParam):
            LayerKernel(heat, 0.0, 1.0, [0.0], -1)


class TestTailBound:
    def test_zero_constant(self):
        assert tail_bound(0.0, 2, 1.0, 1.0, 0.4) == 0.0

    def test_decreases_with_order(self):
        bounds = [tail_bound(1.5, n, 1.0, 1.0, 0.4) for n in range(6)]
        assert all(later < earlier for earlier, later in zip(bounds, bounds[1:]))

    def test_scales_with_majorant(self):
        doubled = 2.0 * tail_bound(1.5, 2, 1.0, 0.5, 0.4)
        assert tail_bound(1.5, 2, 1.0, 0.5, 0.8) == pytest.approx(doubled)

    def test_fitted_constant_reproduces_term(self):
        constant = fit_term_constant(0.03, 1, 1.0, 0.5, 0.2)
        expected = constant**2 * math.gamma(0.5) * math.sqrt(0.5) / math.gamma(1.5) * 0.2
        assert expected == pytest.approx(0.03, rel=1e-12)
