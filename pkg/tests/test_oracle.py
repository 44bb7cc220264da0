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
    DiffusionSpec,
    DimensionMismatch,
    InvalidParam,
    MaxDepthExceeded,
    McConfig,
    NonFinitePath,
    adaptive_integrate,
    em_density,
    exact_linear_density,
    simulate_endpoints,
)
from ansys.math.parametrix._oracle import kernel_density, silverman_bandwidth


class TestAdaptiveIntegrate:
    def test_polynomial(self):
        assert adaptive_integrate(lambda x: 3.0 * x**2, 0.0, 2.0) == pytest.approx(8.0, abs=1e-10)

    def test_constant(self):
        assert adaptive_integrate(lambda x: 1.0, 0.0, 1.0) == pytest.approx(1.0, abs=1e-12)

    def test_infinite_upper_limit(self):
        value = adaptive_integrate(lambda x: math.exp(-x), 0.0, math.inf)
        assert value == pytest.approx(1.0, abs=1e-8)

    def test_gaussian_tail(self):
        value = adaptive_integrate(lambda x: math.exp(-0.5 * x**2), 1.0, math.inf)
        expected = math.sqrt(2.0 * math.pi) * stats.norm.sf(1.0)
        assert value == pytest.approx(expected, abs=1e-8)

    def test_damped_oscillation_on_half_line(self):
        value = adaptive_integrate(lambda x: math.exp(-(x**2)) * math.sin(x) ** 2, 0.0, math.inf)
        assert value == pytest.approx(math.sqrt(math.pi) / 4.0 * (1.0 - math.exp(-1.0)), abs=1e-8)

    def test_left_singularity(self):
        value = adaptive_integrate(lambda x: x**-0.5, 0.0, 1.0, singular_endpoint="left")
        assert value == pytest.approx(2.0, abs=1e-9)

    def test_right_singularity(self):
        value = adaptive_integrate(lambda x: (1.0 - x) ** -0.5, 0.0, 1.0, singular_endpoint="right")
        assert value == pytest.approx(2.0, abs=1e-9)

    @pytest.mark.parametrize("a, b", [(1.0, 1.0), (1.0, 0.0)])
    def test_degenerate_interval(self, a, b):
        with pytest.raises(DegenerateInterval, match="Expected a < b"):
            adaptive_integrate(lambda x: x, a, b)

    @pytest.mark.parametrize(
        "kwargs",
        [{"tol": 0.0}, {"singular_endpoint": "middle"}, {"power": 0.5}],
    )
    def test_invalid_settings(self, kwargs):
        with pytest.raises(InvalidParam):
            adaptive_integrate(lambda x: x, 0.0, 1.0, **kwargs)

    def test_max_depth(self):
        with pytest.raises(MaxDepthExceeded):
            adaptive_integrate(
                lambda x: math.sin(1.0 / x) if x > 0.0 else 0.0,
                0.0,
                1.0,
                tol=1e-14,
                max_depth=4,
            )


class TestExactLinearDensity:
    def test_ou_closed_form(self):
        mean = math.exp(-1.0)
        variance = (1.0 - math.exp(-2.0)) / 2.0
        value = exact_linear_density([[-1.0]], [[1.0]], 0.0, 1.0, [1.0], [0.3])
        expected = stats.norm.pdf(0.3, loc=mean, scale=math.sqrt(variance))
        assert value == pytest.approx(expected, rel=1e-7)

    def test_batch(self):
        ys = np.array([[-1.0], [0.0], [2.0]])
        values = exact_linear_density([["0"]], [[2.0]], 0.0, 0.5, [0.0], ys)
        assert values.shape == (3,)
        expected = stats.norm.pdf(ys[:, 0], scale=math.sqrt(2.0))
        np.testing.assert_allclose(values, expected, rtol=1e-12)

    def test_time_dependent_matrix(self):
        # G(u) = u integrates to a mean factor exp(s^2/2 - t^2/2)
        value = exact_linear_density([["t"]], [[1e-3]], 0.0, 1.0, [1.0], [math.exp(0.5)])
        off_mean = exact_linear_density([["t"]], [[1e-3]], 0.0, 1.0, [1.0], [math.exp(0.5) + 0.01])
        assert value > off_mean

    def test_two_dimensional(self):
        value = exact_linear_density(
            [["0", "0"], ["0", "0"]], np.eye(2), 0.0, 1.0, [0.0, 0.0], [0.0, 0.0]
        )
        assert value == pytest.approx(1.0 / (2.0 * math.pi))

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            exact_linear_density([["0"]], [[1.0]], 0.0, 1.0, [0.0, 0.0], [0.0, 0.0])


class TestMcConfig:
    def test_defaults(self):
        cfg = McConfig()
        assert cfg.to_mapping() == {
            "n_paths": 100000,
            "n_steps": 100,
            "seed": 0,
            "bandwidth": "silverman",
        }

    def test_replace(self):
        cfg = McConfig().replace(n_paths=2000, bandwidth=0.1)
        assert cfg.n_paths == 2000
        assert cfg.bandwidth == 0.1
        assert repr(cfg) == "<McConfig n_paths: 2000, n_steps: 100>"

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"n_paths": 999},
            {"n_steps": 15},
            {"seed": -1},
            {"seed": 2**64},
            {"bandwidth": "scott"},
            {"bandwidth": 0.0},
        ],
    )
    def test_invalid(self, kwargs):
        with pytest.raises(InvalidParam):
            McConfig(**kwargs)


class TestEmDensity:
    cfg = McConfig(n_paths=20000, n_steps=16, seed=11)

    def test_endpoint_shape(self, heat_2d):
        endpoints = simulate_endpoints(heat_2d, 0.0, 1.0, [0.0, 0.0], self.cfg)
        assert endpoints.shape == (20000, 2)

    def test_reproducible(self, ou):
        ys = np.linspace(-2.0, 2.0, 5)[:, None]
        first = em_density(ou, 0.0, 0.5, [0.0], ys, self.cfg)
        np.testing.assert_array_equal(first, em_density(ou, 0.0, 0.5, [0.0], ys, self.cfg))

    def test_threads_do_not_change_the_result(self, ou):
        ys = np.linspace(-2.0, 2.0, 5)[:, None]
        single = em_density(ou, 0.0, 0.5, [0.0], ys, self.cfg, threads=1)
        threaded = em_density(ou, 0.0, 0.5, [0.0], ys, self.cfg, threads=2)
        np.testing.assert_array_equal(single, threaded)

    def test_seed_changes_the_result(self, ou):
        ys = np.linspace(-2.0, 2.0, 5)[:, None]
        first = em_density(ou, 0.0, 0.5, [0.0], ys, self.cfg)
        second = em_density(ou, 0.0, 0.5, [0.0], ys, self.cfg.replace(seed=12))
        assert not np.array_equal(first, second)

    def test_heat_moments(self, heat):
        endpoints = simulate_endpoints(heat, 0.0, 1.0, [0.5], self.cfg)
        assert endpoints.mean() == pytest.approx(0.5, abs=0.03)
        assert endpoints.var() == pytest.approx(1.0, rel=0.05)

    def test_heat_density(self, heat):
        ys = np.array([[-1.0], [0.0], [1.0]])
        values = em_density(heat, 0.0, 1.0, [0.0], ys, self.cfg)
        np.testing.assert_allclose(values, stats.norm.pdf(ys[:, 0]), rtol=0.08)

    def test_non_finite_path(self):
        explosive = DiffusionSpec(drift=["x1^3"], diffusion=[["1"]], name="explosive")
        with pytest.raises(NonFinitePath):
            simulate_endpoints(explosive, 0.0, 1.0, [100.0], McConfig(n_paths=1000, n_steps=16))


class TestKernelDensity:
    def test_silverman_bandwidth(self):
        samples = np.random.default_rng(0).standard_normal((1000, 1))
        expected = (4.0 / 3.0) ** 0.2 * samples.std(ddof=1) * 1000 ** -0.2
        assert silverman_bandwidth(samples)[0] == pytest.approx(expected)

    def test_fixed_bandwidth_single_sample(self):
        values = kernel_density(np.zeros((1, 1)), np.array([[0.0], [1.0]]), 1.0)
        np.testing.assert_allclose(values, stats.norm.pdf([0.0, 1.0]))
