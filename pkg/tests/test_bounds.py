import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from koopcov.bounds import (
    ConfidenceQuery,
    PredictionBoundInputs,
    chebyshev_radius,
    coarse_sigma_bounds,
    full_bound,
    hoeffding_chebyshev_crossover,
    hoeffding_radius,
    min_samples,
    prediction_bound,
    spectral_gap,
)
from koopcov.covariance import f_m


class TestConfidenceRadii:
    def test_chebyshev_example(self):
        q = ConfidenceQuery(m=100, delta=0.1)
        # sqrt(0.05 / (100 * 0.1))
        assert chebyshev_radius(0.05, q) == pytest.approx(math.sqrt(0.005))

    def test_hoeffding_example(self):
        q = ConfidenceQuery(m=1000, delta=0.1)
        assert hoeffding_radius(1.0, q) == pytest.approx(
            math.sqrt(8 * math.log(20.0) / 1000)
        )

    @given(
        st.floats(1e-6, 10),
        st.integers(1, 10**6),
        st.floats(0.001, 0.999),
    )
    @settings(max_examples=60)
    def test_chebyshev_monotonicity(self, var, m, delta):
        q = ConfidenceQuery(m=m, delta=delta)
        r = chebyshev_radius(var, q)
        assert r > 0
        # shrinks with more data, grows with stricter confidence
        assert chebyshev_radius(var, ConfidenceQuery(m=2 * m, delta=delta)) < r
        if delta / 2 > 0.001:
            assert chebyshev_radius(var, ConfidenceQuery(m=m, delta=delta / 2)) > r

    def test_query_validation(self):
        with pytest.raises(ValueError):
            ConfidenceQuery(m=0, delta=0.1)
        with pytest.raises(ValueError):
            ConfidenceQuery(m=10, delta=1.0)
        with pytest.raises(ValueError):
            chebyshev_radius(-1.0, ConfidenceQuery(m=10, delta=0.1))

    def test_crossover_separates_the_radii(self):
        sigma_sq, kernel_sup, m = 0.5, 1.0, 1000
        delta_star = hoeffding_chebyshev_crossover(sigma_sq, kernel_sup, m)
        assert 0 < delta_star < 1
        below = ConfidenceQuery(m=m, delta=delta_star / 10)
        above = ConfidenceQuery(m=m, delta=min(0.99, delta_star * 10))
        assert hoeffding_radius(kernel_sup, below) < chebyshev_radius(sigma_sq, below)
        assert hoeffding_radius(kernel_sup, above) > chebyshev_radius(sigma_sq, above)

    def test_crossover_absent_for_huge_variance(self):
        # sigma^2 >= 8 k^2 ln 2 keeps Chebyshev above Hoeffding near delta = 1
        with pytest.raises(ValueError):
            hoeffding_chebyshev_crossover(10.0, 1.0, 100)

    def test_crossover_is_a_root(self):
        delta_star = hoeffding_chebyshev_crossover(0.5, 1.0, 1000)
        assert 0.5 / delta_star == pytest.approx(
            8.0 * math.log(2.0 / delta_star), rel=1e-9
        )


class TestCoarseBounds:
    def test_m_equals_one(self):
        simple, squared, remark = coarse_sigma_bounds(0.5, 0.9, 1)
        assert simple == pytest.approx(0.5)  # F_1 = 0
        assert squared == pytest.approx(8 * 0.5 / 0.01)
        assert remark == pytest.approx(0.5 * 2.1 / 0.1)

    def test_large_m_simple_approaches_remark(self):
        e0, q1 = 0.3, 0.95
        simple, _, remark = coarse_sigma_bounds(e0, q1, 10**9)
        assert simple == pytest.approx(remark, rel=1e-6)

    @given(st.floats(1e-4, 1.0), st.floats(0.0, 0.999), st.integers(1, 10**6))
    @settings(max_examples=80)
    def test_chain_ordering(self, e0, q1, m):
        simple, squared, remark = coarse_sigma_bounds(e0, q1, m)
        assert e0 <= simple + 1e-15
        assert simple <= squared + 1e-12 * squared
        assert simple <= remark + 1e-12 * remark

    def test_rejects_bad_q1(self):
        with pytest.raises(ValueError):
            coarse_sigma_bounds(0.5, 1.0, 10)


class TestMinSamples:
    def test_constant_variance(self):
        # ceil(2 * 0.5 / (0.01 * 0.1)) = 1000
        assert min_samples(0.5, 0.1, 0.1, 4) == 1000

    def test_floor_at_n(self):
        assert min_samples(1e-12, 0.5, 0.5, 7) == 7

    def test_callable_fixed_point(self):
        e0, d1, q1 = 0.9, 0.2, 0.95

        def var(m):
            return e0 + d1 * f_m(q1, m)

        m_star = min_samples(var, 0.05, 0.1, 4)
        # self-consistency: the returned m satisfies its own requirement
        assert m_star >= 2 * var(m_star) / (0.05**2 * 0.1) - 1
        assert m_star == max(4, math.ceil(2 * var(m_star) / (0.05**2 * 0.1)))

    def test_rejects_bad_arguments(self):
        with pytest.raises(ValueError):
            min_samples(0.5, 0.0, 0.1, 4)
        with pytest.raises(ValueError):
            min_samples(0.5, 0.1, 0.1, 0)


class TestPredictionBound:
    inputs = PredictionBoundInputs(
        N=4, lambda_n=0.04, lambda_n1=0.01, delta_n=0.015, epsilon=0.001
    )

    def test_closed_form_value(self):
        # 1/sqrt(lambda_N) + 2 (N+1)/(delta_N lambda_N), scaled by epsilon
        expected = (1 / 0.2 + 2 * 5 / (0.015 * 0.04)) * 0.001
        assert prediction_bound(self.inputs) == pytest.approx(expected)

    def test_full_bound_adds_the_tail(self):
        tail = math.sqrt(0.01) * 1.3
        inputs = PredictionBoundInputs(
            N=4, lambda_n=0.04, lambda_n1=0.01, delta_n=0.015, epsilon=0.001,
            koopman_rkhs_norm=1.3,
        )
        assert full_bound(inputs) == pytest.approx(prediction_bound(inputs) + tail)

    def test_hypothesis_enforcement(self):
        bad = PredictionBoundInputs(
            N=4, lambda_n=0.04, lambda_n1=0.01, delta_n=0.015, epsilon=0.05
        )
        with pytest.raises(ValueError, match="hypothesis"):
            prediction_bound(bad)
        # explicit override still evaluates the expression
        assert prediction_bound(bad, enforce_hypothesis=False) > 0

    def test_linear_in_epsilon(self):
        doubled = PredictionBoundInputs(
            N=4, lambda_n=0.04, lambda_n1=0.01, delta_n=0.015, epsilon=0.002
        )
        assert prediction_bound(doubled) == pytest.approx(2 * prediction_bound(self.inputs))

    def test_input_validation(self):
        with pytest.raises(ValueError):
            PredictionBoundInputs(N=0, lambda_n=0.1, lambda_n1=0.01, delta_n=0.1, epsilon=0.01)
        with pytest.raises(ValueError):
            PredictionBoundInputs(N=1, lambda_n=0.01, lambda_n1=0.1, delta_n=0.1, epsilon=0.01)


class TestSpectralGap:
    def test_geometric_sequence(self):
        lam = 0.5 ** np.arange(6)
        # gaps halve along the sequence; the minimum over j <= N is at j = N
        assert spectral_gap(lam, 3) == pytest.approx((lam[2] - lam[3]) / 2)

    def test_single_gap(self):
        assert spectral_gap([1.0, 0.4], 1) == pytest.approx(0.3)

    def test_tie_detection(self):
        with pytest.raises(ValueError, match="tied"):
            spectral_gap([1.0, 0.5, 0.5, 0.1], 3)

    def test_needs_enough_eigenvalues(self):
        with pytest.raises(ValueError):
            spectral_gap([1.0, 0.5], 2)

    @given(st.integers(1, 8), st.floats(0.05, 0.9))
    @settings(max_examples=40)
    def test_geometric_gap_formula(self, N, ratio):
        lam = ratio ** np.arange(N + 1)
        assert spectral_gap(lam, N) == pytest.approx(
            (ratio ** (N - 1) - ratio**N) / 2, rel=1e-12
        )
