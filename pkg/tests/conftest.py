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

import pytest

from ansys.math.parametrix import DiffusionSpec, QuadConfig, builtin_model, oscillating_pair


@pytest.fixture(scope="session")
def heat():
    return builtin_model("heat", {"d": 1})


@pytest.fixture(scope="session")
def heat_2d():
    return builtin_model("heat", {"d": 2})


@pytest.fixture(scope="session")
def ou():
    return builtin_model("ou", {"sigma": 0.8})


@pytest.fixture(scope="session")
def variable_sigma():
    return DiffusionSpec(
        drift=["-x1"],
        diffusion=[["1 + 0.25*sin(x1)"]],
        gamma=1.0,
        lipschitz_K=1.0,
        ellipticity_Lambda=1.0 / 0.75**2,
        name="variable_sigma",
    )


@pytest.fixture(scope="session")
def oscillating_models():
    return builtin_model("oscillating_pair", {"eps": 1.0, "q": 2.01, "sigma": 1.0})


@pytest.fixture(scope="session")
def oscillating():
    return oscillating_pair(1.0, 2.01)


@pytest.fixture(scope="session")
def coarse_quad():
    return QuadConfig(n_time=8, n_space=31, space_radius=5.0)
