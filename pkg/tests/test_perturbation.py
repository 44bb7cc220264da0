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
from scipy import integrate, special

from ansys.math.parametrix import (
    DiffusionSpec,
    DimensionMismatch,
    EmptyComparisons,
    EmptyGrid,
    InvalidParam,
    L1Bound,
    Maxima,
    OutOfInterval,
    PerturbationPair,
    PerturbationReport,
    QuadConfig,
    beta_weight,
    delta_diagonal,
    delta_l1,
    delta_linf,
    density_diff_l1,
    density_diff_terms,
    diagonal_samples,
    fit_holder_constant,
    flow_point,
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
from ansys.math.parametrix._perturbation import (
    CSV_FIELDS,
    calibrate_constant,
    comparison_cloud,
    default_sup_grid,
    oscillation_energy,
)

SHIFT = 0.5


@pytest.fixture(scope="module")
def shifted(heat):
    drifted = DiffusionSpec(drift=[repr(SHIFT)], diffusion=[["1"]], name="shifted_heat")
    return PerturbationPair(heat, drifted, 1.0)


@pytest.fixture(scope="module")
def identical(ou):
    return PerturbationPair(ou, ou, 0.5)


@pytest.fixture(scope="module")
def sigma_pair():
    # Diffusion coefficients differing by an x-dependent amount, no drift.
    common = {"drift": ["0"], "gamma": 1.0, "lipschitz_K": 1.0, "ellipticity_Lambda": 1 / 0.75**2}
    base = DiffusionSpec(diffusion=[["1 + 0.25*sin(x1)"]], name="sigma_base", **common)
    perturbed = DiffusionSpec(diffusion=[["1 + 0.125*sin(x1)"]], name="sigma_perturbed", **common)
    return PerturbationPair(base, perturbed, 0.5)


class TestPerturbationPair:
    def test_defaults(self, oscillating):
        assert oscillating.delta == 0.75
        assert oscillating.alpha == 1.0
        assert oscillating.gamma == 1.0
        assert oscillating.majorant.lam == pytest.approx(2.0)
        assert oscillating.lipschitz_K == 2.0
        ((point, weight),) = oscillating.mu
        np.testing.assert_array_equal(point, [1.0])
        assert weight == 1.0

    def test_alpha_follows_epsilon(self):
        assert oscillating_pair(0.25, 2.01).alpha == pytest.approx(0.5)

    def test_mu_arrays(self, ou):
        pair = PerturbationPair(ou, ou, 1.0, mu=[([0.0], 0.25), ([2.0], 0.75)])
        np.testing.assert_array_equal(pair.mu_points, [[0.0], [2.0]])
        np.testing.assert_array_equal(pair.mu_weights, [0.25, 0.75])
        pair.mu_points[0, 0] = 5.0
        assert pair.mu_points[0, 0] == 0.0

    def test_differences(self, oscillating):
        x = np.array([[0.3]])
        expected = -math.exp(-(0.5**2) / 2.01) * abs(math.sin(0.5)) ** (2 / 2.01) * math.cos(0.3)
        assert oscillating.drift_difference(0.5, x)[0, 0] == pytest.approx(expected, rel=1e-13)
        np.testing.assert_array_equal(oscillating.sigma_difference(0.5, x), 0.0)

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"epsilon": 0.0},
            {"epsilon": 1.0, "delta": 0.5},
            {"epsilon": 1.0, "delta": 1.0},
            {"epsilon": 1.0, "alpha": -1.0},
            {"epsilon": 1.0, "mu": [([0.0], 0.5)]},
            {"epsilon": 1.0, "mu": [([0.0], 1.5), ([1.0], -0.5)]},
        ],
    )
    def test_invalid_parameters(self, ou, kwargs):
        with pytest.raises(InvalidParam):
            PerturbationPair(ou, ou, **kwargs)

    def test_mu_dimension(self, ou):
        with pytest.raises(DimensionMismatch):
            PerturbationPair(ou, ou, 1.0, mu=[([0.0, 1.0], 1.0)])

    def test_model_dimensions(self, heat, heat_2d):
        with pytest.raises(DimensionMismatch):
            PerturbationPair(heat, heat_2d, 1.0)

    def test_repr(self, oscillating):
        assert repr(oscillating) == (
            "<PerturbationPair base: oscillating_base, "
            "perturbed: oscillating_eps_1.0, epsilon: 1.0>"
        )


class TestSeminorms:
    def test_comparison_cloud(self):
        cloud = comparison_cloud(2, 12)
        radii = np.linalg.norm(cloud, axis=-1)
        np.testing.assert_allclose(radii[:6], 2.0 ** -np.arange(6))
        np.testing.assert_array_equal(comparison_cloud(2, 12), cloud)

    def test_identity_field(self):
        value = local_seminorm(lambda t, x: x, 0.0, [3.0, 4.0], 1.0, [[3.0, 5.0], [0.0, 0.0]])
        assert value == pytest.approx(6.0)

    def test_holder_exponent(self):
        value = local_seminorm(lambda t, x: x, 0.0, [0.0], 0.5, [[4.0]])
        assert value == pytest.approx(2.0)

    def test_points_equal_to_the_center_are_ignored(self):
        value = local_seminorm(lambda t, x: 2.0 * x, 0.0, [1.0], 1.0, [[1.0], [2.0]])
        assert value == pytest.approx(4.0)

    def test_empty_comparisons(self):
        with pytest.raises(EmptyComparisons):
            local_seminorm(lambda t, x: x, 0.0, [1.0], 1.0, [[1.0]])


class TestBetaWeight:
    def test_value(self):
        assert beta_weight(0.5, 0.0, 1.0, 1.0, 0.5) == pytest.approx(math.sqrt(2.0) / 2.0)

    def test_normalized(self):
        value, _ = integrate.quad(lambda u: beta_weight(u, 0.2, 0.9, 1.0, 0.5), 0.2, 0.9)
        assert value == pytest.approx(1.0, rel=1e-6)

    def test_out_of_interval(self):
        with pytest.raises(OutOfInterval):
            beta_weight(1.5, 0.0, 1.0, 1.0, 0.5)


class TestDeltas:
    def test_identical_models(self, identical, coarse_quad):
        assert delta_l1(identical, 0.0, 1.0, coarse_quad) == (0.0, 0.0)
        assert delta_linf(identical, 0.0, 1.0) == (0.0, 0.0)
        assert delta_diagonal(identical, 0.3, [0.2]) == 0.0

    def test_constant_shift(self, shifted, coarse_quad):
        delta_b, delta_sigma = delta_l1(shifted, 0.0, 0.5, coarse_quad)
        assert delta_b == pytest.approx(SHIFT, rel=1e-12)
        assert delta_sigma == 0.0
        assert delta_diagonal(shifted, 0.1, [3.0]) == pytest.approx(SHIFT)

    def test_oscillating(self, oscillating, coarse_quad):
        delta_b, delta_sigma = delta_l1(oscillating, 0.0, 0.5, coarse_quad)
        assert 0.0 < delta_b < 2.0
        assert delta_sigma == 0.0

    def test_cell_outside_horizon(self, oscillating, coarse_quad):
        with pytest.raises(OutOfInterval):
            delta_l1(oscillating, 0.5, 1.5, coarse_quad)

    def test_uniform_drift_size(self, oscillating):
        delta_b, delta_sigma = delta_linf(oscillating, 0.0, 1.0)
        u = np.linspace(0.0, 1.0, 21)
        expected = np.max(np.exp(-(u**2) / 2.01) * np.abs(np.sin(u)) ** (2 / 2.01))
        assert delta_b == pytest.approx(expected, rel=1e-13)
        assert delta_sigma == 0.0

    def test_uniform_sigma_size(self, heat):
        wobbly = DiffusionSpec(
            drift=["0"], diffusion=[["1 + 0.1*sin(x1)"]], ellipticity_Lambda=1.0 / 0.81
        )
        pair = PerturbationPair(heat, wobbly, 1.0)
        grid = np.array([[0.0, 0.0], [0.0, math.pi / 2]])
        _, delta_sigma = delta_linf(pair, 0.0, 1.0, grid)
        assert delta_sigma == pytest.approx(0.1 + 0.1 / (math.pi / 2))

    def test_empty_sup_grid(self, oscillating):
        with pytest.raises(EmptyGrid):
            delta_linf(oscillating, 0.0, 1.0, np.empty((0, 2)))

    def test_sup_grid_outside_interval(self, oscillating):
        with pytest.raises(OutOfInterval):
            delta_linf(oscillating, 0.0, 1.0, [[2.0, 0.0]])

    def test_default_sup_grid(self):
        grid = default_sup_grid(0.0, 1.0, 2)
        assert grid.shape == (21 * 41 * 41, 3)
        assert grid[:, 0].min() == 0.0
        assert grid[:, 1].max() == 5.0


class TestTimeGrid:
    def test_cell_count(self):
        cells = uniform_time_grid(0.0, 1.0, 0.1)
        assert len(cells) == 55
        assert cells[0] == (0.0, 0.1)
        assert cells[-1] == (0.9, 1.0)
        assert all(s > t for t, s in cells)

    def test_step_must_divide(self):
        with pytest.raises(InvalidParam):
            uniform_time_grid(0.0, 1.0, 0.3)


class TestMaxima:
    def test_constant_shift(self, shifted, coarse_quad):
        found = maxima(shifted, uniform_time_grid(0.0, 1.0, 0.5), coarse_quad, threads=2)
        assert found.M == pytest.approx(SHIFT**0.25)
        assert found.Mbar == pytest.approx(SHIFT**0.25)
        assert found.argmax["M"] == (0.0, 1.0)
        assert found.MC == 0.0
        assert found.MbarC == 0.0
        assert found.argmax["MC"] is None
        assert len(found.deltas) == 3

    def test_ties_go_to_the_smallest_cell(self, identical, coarse_quad):
        found = maxima(identical, uniform_time_grid(0.0, 1.0, 0.5), coarse_quad)
        assert found.as_tuple() == (0.0, 0.0, 0.0, 0.0)
        assert found.argmax == {
            "M": (0.0, 0.5),
            "Mbar": (0.0, 0.5),
            "MC": (0.0, 1.0),
            "MbarC": (0.0, 1.0),
        }

    def test_empty_grid(self, shifted):
        with pytest.raises(EmptyGrid):
            maxima(shifted, [])


class TestBounds:
    maxima_ = Maxima({"M": 1.0, "Mbar": 2.0, "MC": 3.0, "MbarC": 4.0}, {}, {})

    def test_l1_theorem_bound(self, oscillating):
        bound = l1_theorem_bound(oscillating, 0.0, 1.0, 0.5, self.maxima_)
        assert isinstance(bound, L1Bound)
        assert bound.strong == pytest.approx(0.5 / 0.25 * 4.0)
        assert bound.weak == pytest.approx(0.5 / 0.25 * 6.0)

    def test_negative_constant(self, oscillating):
        with pytest.raises(InvalidParam):
            l1_theorem_bound(oscillating, 0.0, 1.0, -1.0, self.maxima_)

    def test_l1_order_bound(self, oscillating):
        value = l1_order_bound(oscillating, 0.0, 0.5, 1, 2.0, self.maxima_)
        assert value == pytest.approx(2.0**3 * 6.0 * 0.5**0.75 * 2.0)

    def test_order_must_be_positive(self, oscillating):
        with pytest.raises(InvalidParam):
            l1_order_bound(oscillating, 0.0, 0.5, 0, 2.0, self.maxima_)

    def test_calibrate_constant(self):
        assert calibrate_constant([1.0, 2.0], [1.0, 4.0]) == 1.0
        assert calibrate_constant([0.0], [0.0]) == 0.0
        assert calibrate_constant([1.0], [0.0]) == math.inf


class TestMixedNorm:
    def test_l1(self):
        assert lq_lp_norm([[1.0, 2.0], [3.0]], [0.5, 0.5]) == pytest.approx(3.0)

    def test_l2_inner(self):
        value = lq_lp_norm([[1.0, -2.0], [3.0]], [0.5, 0.5], p=2.0)
        assert value == pytest.approx(0.5 * math.sqrt(5.0) + 1.5)

    def test_weights_and_suprema(self):
        assert lq_lp_norm([[1.0, 2.0]], [1.0], y_weights=[[0.25, 0.25]]) == pytest.approx(0.75)
        assert lq_lp_norm([[1.0, 2.0], [3.0]], [0.5, 0.5], p=math.inf, q=math.inf) == 3.0

    def test_invalid_exponent(self):
        with pytest.raises(InvalidParam):
            lq_lp_norm([[1.0]], [1.0], p=0.5)


class TestDensityDifference:
    def test_identical_models(self, identical, coarse_quad):
        result = density_diff_terms(identical, 0.0, 0.5, N=1, quad=coarse_quad)
        assert result.total == 0.0
        assert result.per_order == (0.0, 0.0)

    def test_constant_shift_closed_form(self, shifted):
        quad = QuadConfig(n_time=8, n_space=401, space_radius=5.0)
        result = density_diff_terms(shifted, 0.0, 1.0, N=0, quad=quad)
        expected = 2.0 * special.erf(SHIFT / (2.0 * math.sqrt(2.0)))
        assert result.total == pytest.approx(expected, rel=1e-2)
        assert result.per_order == (pytest.approx(result.total),)
        assert density_diff_l1(shifted, 0.0, 1.0, N=0, quad=quad) == result.total


class TestTheoremChecks:
    def test_l1_check_calibrates(self, shifted, coarse_quad):
        report = l1_theorem_check(
            shifted, 0.0, 1.0, N=0, quad=coarse_quad, time_grid=uniform_time_grid(0.0, 1.0, 0.5)
        )
        assert report.kind == "l1"
        assert report.passed
        assert report.rhs == pytest.approx(report.lhs)
        assert report.delta_b == pytest.approx(SHIFT)
        row = report.as_row()
        assert tuple(row) == CSV_FIELDS
        assert row["fittedC"] == report.fitted_constants["C"]

    def test_l1_check_with_small_constant_fails(self, shifted, coarse_quad):
        report = l1_theorem_check(
            shifted,
            0.0,
            1.0,
            N=0,
            quad=coarse_quad,
            time_grid=uniform_time_grid(0.0, 1.0, 0.5),
            fitted_C=1e-6,
        )
        assert not report.passed

    def test_linf_check(self, shifted, coarse_quad):
        grid = np.array([[0.0, y] for y in np.linspace(-2.0, 2.0, 5)])
        report = linf_theorem_check(shifted, 0.0, 1.0, grid, N=0, quad=coarse_quad)
        assert report.kind == "linf"
        assert report.passed
        assert report.delta_b == pytest.approx(SHIFT)
        assert report.maxima == (0.0, 0.0, 0.0, 0.0)
        x, _ = report.location
        np.testing.assert_array_equal(x, [0.0])
        assert report.norm_lhs <= report.norm_rhs * (1.0 + 1e-12)

    def test_linf_empty_grid(self, shifted):
        with pytest.raises(EmptyGrid):
            linf_theorem_check(shifted, 0.0, 1.0, np.empty((0, 2)))


class TestReport:
    def test_non_finite_entries_fail(self):
        report = PerturbationReport(
            "l1", 0.0, 1.0, 1.0, math.nan, 0.0, (0.0,) * 4, 0.1, 0.2, {"C": 1.0}, True
        )
        assert not report.passed

    def test_negative_entries_fail(self):
        report = PerturbationReport(
            "l1", 0.0, 1.0, 1.0, 0.1, 0.0, (0.0,) * 4, 0.1, 0.2, {"C": -1.0}, True
        )
        assert not report.passed

    def test_passing_report(self):
        report = PerturbationReport(
            "l1", 0.0, 1.0, 1.0, 0.1, 0.0, (0.0,) * 4, 0.1, 0.2, {"C": 1.0}, True
        )
        assert report.passed
        assert repr(report) == "<PerturbationReport kind: l1, passed: True>"


class TestOscillatingClosedForms:
    def test_holder_beta_norm(self):
        assert holder_beta_norm(0.0, 1.0, 1.0) == pytest.approx(1.0)
        p = 1.5
        value, _ = integrate.quad(
            lambda u: beta_weight(u, 0.0, 0.5, 1.0, 0.5) ** p, 0.0, 0.5, limit=200
        )
        assert holder_beta_norm(0.0, 0.5, p) == pytest.approx(value ** (1.0 / p), rel=1e-6)

    def test_holder_beta_norm_exponent(self):
        with pytest.raises(InvalidParam):
            holder_beta_norm(0.0, 1.0, 2.0)

    @pytest.mark.parametrize("eps", [1.0, 0.05, 0.0025])
    def test_tail_integral(self, eps):
        value, _ = integrate.quad(
            lambda u: math.exp(-(u**2) / eps) * math.sin(u / math.sqrt(eps)) ** 2,
            0.0,
            10.0 * math.sqrt(eps),
            limit=200,
        )
        assert oscillation_tail_integral(eps) == pytest.approx(value, rel=1e-8)

    def test_energy_approaches_tail_integral(self):
        expected = oscillation_tail_integral(1.0)
        assert oscillation_energy(0.0, 20.0, 1.0) == pytest.approx(expected, rel=1e-10)

    def test_rate_exponent(self):
        assert oscillating_rate_exponent(2.01) == pytest.approx(1.0 / (8.0 * 3.01))
        assert oscillating_rate_exponent(3.0, delta=0.6) == pytest.approx(0.04 / 1.4)

    @pytest.mark.parametrize("q", [2.0, 1.5])
    def test_rate_exponent_needs_q_above_two(self, q):
        with pytest.raises(InvalidParam, match="q > 2"):
            oscillating_rate_exponent(q)

    def test_nonuniform_lower_bound(self):
        assert nonuniform_lower_bound(2.0) == pytest.approx(0.5 * math.exp(-(math.pi**2) / 8.0))

    def test_fit_holder_constant(self):
        q = 2.01
        p = q / (q - 1.0)
        cells = [(0.0, 0.5), (0.5, 1.0)]
        deltas = {
            cell: factor * holder_beta_norm(*cell, p) * oscillation_energy(*cell, 1.0) ** (1.0 / q)
            for cell, factor in zip(cells, (2.0, 1.0))
        }
        assert fit_holder_constant(deltas, 1.0, q) == pytest.approx(2.0)


class TestLemmas:
    def test_random_samples(self, oscillating):
        samples = random_samples(oscillating, n=6, seed=4)
        assert samples.shape == (6, 4)
        assert np.all(samples[:, 1] > samples[:, 0])
        assert np.all(samples[:, 1] <= oscillating.horizon_T)
        np.testing.assert_array_equal(random_samples(oscillating, n=6, seed=4), samples)

    def test_random_samples_with_spans(self, oscillating):
        samples = random_samples(oscillating, n=6, spans=[0.1, 0.2, 0.4])
        np.testing.assert_allclose(samples[:, 1] - samples[:, 0], [0.1, 0.2, 0.4] * 2)

    def test_main_terms(self, oscillating, coarse_quad):
        samples = random_samples(oscillating, n=3, seed=1)
        report = verify_lemma("main_terms", oscillating, samples, coarse_quad)
        assert report.finite
        assert report.lhs.shape == (9,)
        assert set(report.variants) == {"displayed", "seminorm"}
        assert report.fitted_C == report.variants["displayed"]
        assert report.scaling_exponent is None

    def test_kernels(self, oscillating, coarse_quad):
        samples = random_samples(oscillating, n=3, seed=2, spans=[0.1, 0.2, 0.4])
        report = verify_lemma("kernels", oscillating, samples, coarse_quad)
        assert report.finite
        assert report.n_samples == 3
        assert report.scaling_exponent is not None
        assert report.argmax.shape == (4,)

    def test_diagonal_samples(self, oscillating):
        samples = diagonal_samples(oscillating, 0.2, [1.0], [0.1, 0.4], offsets=(0.5, 1.0))
        assert samples.shape == (4, 4)
        np.testing.assert_allclose(samples[:, 1] - samples[:, 0], [0.1, 0.1, 0.4, 0.4])
        np.testing.assert_allclose(samples[:, 3], 1.0)
        theta = flow_point(oscillating.base, 0.2, 0.3, [1.0])
        scale = math.sqrt(oscillating.ellipticity_Lambda * 0.1)
        np.testing.assert_allclose(samples[:2, 2], theta[0] + np.array([0.5, 1.0]) * scale)

    def test_diagonal_samples_outside_horizon(self, oscillating):
        with pytest.raises(OutOfInterval):
            diagonal_samples(oscillating, 0.8, [1.0], [0.5])

    def test_kernel_singularity_exponent(self, sigma_pair, coarse_quad):
        spans = [2.0**-k for k in range(3, 9)]
        samples = diagonal_samples(sigma_pair, 0.25, [0.0], spans)
        report = verify_lemma("kernels", sigma_pair, samples, coarse_quad)
        assert report.finite
        assert report.scaling_exponent == pytest.approx(-(1.0 - sigma_pair.gamma / 2.0), abs=0.15)

    def test_drift_only_kernel_difference_is_not_singular(self, oscillating, coarse_quad):
        spans = [2.0**-k for k in range(3, 9)]
        samples = diagonal_samples(oscillating, 0.25, [1.0], spans)
        report = verify_lemma("kernels", oscillating, samples, coarse_quad)
        assert report.scaling_exponent > -0.35

    def test_linf_main_terms(self, oscillating, coarse_quad):
        samples = random_samples(oscillating, n=2, seed=3)
        report = verify_lemma("linf_main_terms", oscillating, samples, coarse_quad, orders=(0,))
        assert report.finite
        assert report.lhs.shape == (2,)

    def test_identical_models_give_zero(self, identical, coarse_quad):
        samples = random_samples(identical, n=2, seed=5)
        assert verify_lemma("kernels", identical, samples, coarse_quad).fitted_C == 0.0

    def test_unknown_lemma(self, oscillating):
        with pytest.raises(InvalidParam, match="Known lemmas"):
            verify_lemma("lemma_42", oscillating, np.zeros((1, 4)))

    def test_empty_samples(self, oscillating):
        with pytest.raises(EmptyGrid):
            verify_lemma("kernels", oscillating, np.empty((0, 4)))
