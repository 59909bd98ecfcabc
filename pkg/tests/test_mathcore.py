"""
This file is part of varbpr.

varbpr is free software: you can redistribute it and/or modify
it under the terms of the GNU General Public License as published by
the Free Software Foundation, either version 3 of the License, or
(at your option) any later version.

varbpr is distributed in the hope that it will be useful,
but WITHOUT ANY WARRANTY; without even the implied warranty of
MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE.  See the
GNU General Public License for more details.

You should have received a copy of the GNU General Public License
along with varbpr.  If not, see <http://www.gnu.org/licenses/>.
"""

__author__ = "varbpr developers"
__license__ = "GPLv3"

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from varbpr.exceptions import DomainError
from varbpr.mathcore.mathcore import (check_simplex, cross_entropy, entropy, kl_divergence, log_sigmoid,
                                      maclaurin_remainder, normalize, sigmoid, softplus,
                                      stable_log_softmax, stable_softmax)

_weights = st.lists(st.floats(min_value=0.01, max_value=10.0), min_size=1, max_size=8)
_logits = st.lists(st.floats(min_value=-50.0, max_value=50.0), min_size=1, max_size=8)


@st.composite
def simplex_pairs(draw):
    n = draw(st.integers(min_value=1, max_value=8))
    p = draw(st.lists(st.floats(min_value=0.01, max_value=10.0), min_size=n, max_size=n))
    q = draw(st.lists(st.floats(min_value=0.01, max_value=10.0), min_size=n, max_size=n))
    return normalize(p), normalize(q)


class TestLogSigmoid:

    def test_known_values(self):
        assert log_sigmoid(0.0) == pytest.approx(-math.log(2.0), abs=1e-15)
        assert -log_sigmoid(2.0) == pytest.approx(0.1269280110429725, abs=1e-12)
        assert sigmoid(0.0) == 0.5

    def test_extreme_arguments_stay_finite(self):
        assert log_sigmoid(-1000.0) == pytest.approx(-1000.0)
        assert log_sigmoid(1000.0) == pytest.approx(0.0, abs=1e-300)
        assert softplus(800.0) == pytest.approx(800.0)

    def test_vectorized(self):
        x = np.array([-3.0, 0.0, 3.0])
        assert_allclose(log_sigmoid(x), np.log(1.0 / (1.0 + np.exp(-x))), rtol=1e-14)

    @pytest.mark.parametrize('value', [np.nan, np.inf, -np.inf])
    def test_non_finite_is_a_domain_error(self, value):
        with pytest.raises(DomainError):
            log_sigmoid(value)
        with pytest.raises(ValueError):
            softplus(value)


class TestMaclaurinRemainder:
    """ln sigma(x) = -ln 2 + x/2 + eps(x) with |eps(x)| <= x^2/8."""

    def test_bound_on_dense_grid(self):
        x = np.linspace(-5.0, 5.0, 10001)
        remainder = log_sigmoid(x) + math.log(2.0) - x / 2.0
        assert np.all(np.abs(remainder) <= x ** 2 / 8.0 + 1e-15)

    def test_matches_direct_remainder(self):
        x = np.linspace(-20.0, 20.0, 401)
        assert_allclose(maclaurin_remainder(x), log_sigmoid(x) + math.log(2.0) - x / 2.0, atol=1e-12)

    def test_zero_at_origin(self):
        assert maclaurin_remainder(0.0) == 0.0

    def test_asymptotic_branch(self):
        assert maclaurin_remainder(60.0) == pytest.approx(math.log(2.0) - 30.0, rel=1e-15)
        assert maclaurin_remainder(-60.0) == pytest.approx(math.log(2.0) - 30.0, rel=1e-15)

    def test_small_arguments_keep_relative_precision(self):
        assert maclaurin_remainder(1e-6) == pytest.approx(-(1e-6) ** 2 / 8.0, rel=1e-6)


class TestSoftmax:

    def test_sums_to_one(self):
        p = stable_softmax([1.0, 2.0, 3.0])
        assert p.sum() == pytest.approx(1.0)
        assert np.all(np.diff(p) > 0)

    def test_extreme_logits(self):
        p = stable_softmax([1000.0, 0.0])
        assert p[0] == pytest.approx(1.0)
        assert np.isfinite(p).all()

    def test_temperature(self):
        assert_allclose(stable_softmax([0.0, 2.0], temperature=2.0), stable_softmax([0.0, 1.0]))

    def test_log_softmax_agrees(self):
        logits = np.array([0.5, -1.0, 3.0])
        assert_allclose(np.exp(stable_log_softmax(logits)), stable_softmax(logits), rtol=1e-14)

    def test_batched_rows(self):
        rows = stable_softmax(np.array([[0.0, 0.0], [0.0, math.log(3.0)]]))
        assert_allclose(rows, [[0.5, 0.5], [0.25, 0.75]])

    def test_invalid_input(self):
        with pytest.raises(DomainError):
            stable_softmax([])
        with pytest.raises(DomainError):
            stable_softmax([1.0, 2.0], temperature=0.0)
        with pytest.raises(DomainError):
            stable_softmax([1.0, np.nan])

    @given(_logits, st.floats(min_value=-1000.0, max_value=1000.0))
    @settings(max_examples=200, deadline=None)
    def test_shift_invariance(self, logits, shift):
        logits = np.array(logits)
        assert_allclose(stable_softmax(logits + shift), stable_softmax(logits), atol=1e-12)


class TestSimplex:

    def test_check_simplex(self):
        assert_allclose(check_simplex([0.25, 0.75]), [0.25, 0.75])
        with pytest.raises(DomainError):
            check_simplex([0.5, 0.6])
        with pytest.raises(DomainError):
            check_simplex([1.5, -0.5])
        with pytest.raises(DomainError):
            check_simplex([])

    def test_normalize(self):
        assert_allclose(normalize([1.0, 3.0]), [0.25, 0.75])
        with pytest.raises(DomainError):
            normalize([0.0, 0.0])


class TestInformation:

    def test_uniform_entropy(self):
        assert entropy(np.full(4, 0.25)) == pytest.approx(math.log(4.0))

    def test_one_hot_entropy_is_zero(self):
        assert entropy([0.0, 1.0, 0.0]) == 0.0

    def test_kl_support(self):
        with pytest.raises(DomainError):
            kl_divergence([0.5, 0.5], [1.0, 0.0])
        with pytest.raises(DomainError):
            cross_entropy([0.5, 0.5], [1.0, 0.0])
        assert kl_divergence([1.0, 0.0], [0.5, 0.5]) == pytest.approx(math.log(2.0))

    def test_length_mismatch(self):
        with pytest.raises(DomainError):
            kl_divergence([0.5, 0.5], [0.2, 0.3, 0.5])

    @given(simplex_pairs())
    @settings(max_examples=200, deadline=None)
    def test_cross_entropy_decomposition(self, pair):
        p, q = pair
        assert cross_entropy(p, q) == pytest.approx(entropy(p) + kl_divergence(p, q), abs=1e-12)
        assert kl_divergence(p, q) >= 0.0
        assert kl_divergence(p, p) == pytest.approx(0.0, abs=1e-15)
