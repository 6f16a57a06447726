import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from koopcov.ou import (
    KOOPMAN_INDEX_CAP,
    GaussianObservable,
    OuSystem,
    euler_maruyama,
    koopman_eigenfunction,
    koopman_eigenfunction_matrix,
    koopman_eigenvalue,
    koopman_normalization,
    propagate_gaussian,
    propagate_kernel_section,
    sample_invariant,
    sample_transition,
    simulate_trajectory,
)
from koopcov.quadrature import gauss_hermite, integrate_gaussian

SYS = OuSystem(alpha=1.0, lag=0.05)
RULE = gauss_hermite(128)


class TestOuSystem:
    def test_derived_constants(self):
        assert SYS.v_t_sq == pytest.approx(1 - math.exp(-0.1))
        assert SYS.c_t == pytest.approx(1.0 / SYS.v_t_sq)
        assert SYS.invariant_variance == pytest.approx(0.5)
        assert SYS.decay == pytest.approx(math.exp(-0.05))

    @given(st.floats(0.05, 20), st.floats(1e-4, 10))
    @settings(max_examples=60)
    def test_parameter_identities(self, alpha, lag):
        sys = OuSystem(alpha, lag)
        assert 0 < sys.v_t_sq <= 1
        assert sys.transition_variance == pytest.approx(sys.v_t_sq / (2 * alpha))
        # invariant variance = stationary fixed point of the AR(1) recursion
        assert sys.decay**2 * sys.invariant_variance + sys.transition_variance == pytest.approx(
            sys.invariant_variance
        )

    def test_rejects_bad_parameters(self):
        with pytest.raises(ValueError):
            OuSystem(0.0, 0.1)
        with pytest.raises(ValueError):
            OuSystem(1.0, -1.0)


class TestGaussianObservable:
    def test_default_normalization_integrates_to_one(self):
        obs = GaussianObservable(mean=0.4, variance=0.3)
        val, _ = quad(obs, -np.inf, np.inf)
        assert val == pytest.approx(1.0)

    def test_explicit_normalization(self):
        obs = GaussianObservable(mean=0.0, variance=1.0, normalization=2.0)
        assert obs(0.0) == pytest.approx(2.0)

    def test_rejects_nonpositive_variance(self):
        with pytest.raises(ValueError):
            GaussianObservable(0.0, 0.0)


class TestSamplers:
    def test_invariant_moments(self):
        draws = sample_invariant(SYS, 7, 200_000)
        assert abs(draws.mean()) < 0.01
        assert draws.var() == pytest.approx(SYS.invariant_variance, rel=0.02)

    def test_invariant_determinism(self):
        a = sample_invariant(SYS, 11, 50)
        b = sample_invariant(SYS, 11, 50)
        np.testing.assert_array_equal(a, b)

    def test_transition_moments(self):
        draws = np.array([sample_transition(SYS, 1.0, [3, i]) for i in range(20_000)])
        assert draws.mean() == pytest.approx(SYS.decay, abs=0.01)
        assert draws.var() == pytest.approx(SYS.transition_variance, rel=0.05)

    def test_trajectory_shape_and_pairs(self):
        traj = simulate_trajectory(SYS, 101, 5)
        xs, ys = traj.pairs()
        assert xs.size == ys.size == 100
        np.testing.assert_array_equal(xs[1:], ys[:-1])

    def test_trajectory_stationary_statistics(self):
        traj = simulate_trajectory(SYS, 400_000, 5)
        s = traj.states
        assert s.var() == pytest.approx(SYS.invariant_variance, rel=0.02)
        # lag-1 autocorrelation equals the AR(1) coefficient e^{-alpha t}
        rho = np.mean(s[:-1] * s[1:]) / s.var()
        assert rho == pytest.approx(SYS.decay, abs=0.005)

    def test_trajectory_determinism(self):
        a = simulate_trajectory(SYS, 50, 9).states
        b = simulate_trajectory(SYS, 50, 9).states
        np.testing.assert_array_equal(a, b)


class TestEulerMaruyama:
    def test_zero_noise_decays_exponentially(self):
        traj = euler_maruyama(lambda x: -x, lambda x: 0.0, 1.0, 1e-3, 1000, 0)
        assert traj.states[-1] == pytest.approx(math.exp(-1.0), rel=1e-2)

    def test_matches_exact_ou_statistics(self):
        traj = euler_maruyama(lambda x: -x, lambda x: 1.0, 0.0, 0.01, 200_000, 42)
        tail = traj.states[10_000:]
        assert tail.var() == pytest.approx(0.5, rel=0.05)

    @pytest.mark.filterwarnings("ignore:overflow")
    def test_blowup_is_reported_with_step_index(self):
        with pytest.raises(FloatingPointError, match="step"):
            euler_maruyama(lambda x: x**3, lambda x: 0.0, 10.0, 1.0, 50, 0)

    def test_scheme_label(self):
        traj = euler_maruyama(lambda x: -x, lambda x: 1.0, 0.0, 0.1, 5, 0)
        assert traj.scheme == "euler_maruyama"


class TestKoopmanSpectrum:
    def test_eigenvalue_examples(self):
        assert koopman_eigenvalue(SYS, 0) == 1.0
        assert koopman_eigenvalue(SYS, 1) == pytest.approx(math.exp(-0.05))
        assert koopman_eigenvalue(SYS, 10) == pytest.approx(math.exp(-0.5))

    def test_eigenvalue_semigroup(self):
        double = OuSystem(SYS.alpha, 2 * SYS.lag)
        assert koopman_eigenvalue(double, 3) == pytest.approx(
            koopman_eigenvalue(SYS, 3) ** 2
        )

    def test_normalization_corrections_are_unity(self):
        for j in range(16):
            assert koopman_normalization(SYS, j) == pytest.approx(1.0, abs=1e-12)

    def test_low_order_eigenfunctions(self):
        # psi_0 = 1, psi_1(x) = sqrt(2 alpha) x, psi_2(x) = (2 alpha x^2 - 1)/sqrt(2)
        x = np.linspace(-2, 2, 9)
        np.testing.assert_allclose(koopman_eigenfunction(SYS, 0, x), np.ones_like(x))
        np.testing.assert_allclose(
            koopman_eigenfunction(SYS, 1, x), math.sqrt(2) * x, rtol=1e-12
        )
        np.testing.assert_allclose(
            koopman_eigenfunction(SYS, 2, x), (2 * x**2 - 1) / math.sqrt(2), rtol=1e-12
        )

    def test_orthonormality(self):
        x = RULE.nodes / math.sqrt(SYS.alpha)
        psi = koopman_eigenfunction_matrix(SYS, 16, x)
        gram = (psi * RULE.weights[None, :]) @ psi.T / math.sqrt(math.pi)
        assert np.max(np.abs(gram - np.eye(16))) < 1e-10

    def test_eigenrelation(self):
        # E[psi_j(X_t) | X_0 = x] = q_j psi_j(x)
        for j in (1, 5, 12):
            qj = koopman_eigenvalue(SYS, j)
            for x in (-1.1, 0.0, 0.7):
                lhs = integrate_gaussian(
                    lambda y: koopman_eigenfunction(SYS, j, y),
                    SYS.decay * x,
                    SYS.transition_variance,
                    RULE,
                )
                assert lhs == pytest.approx(qj * koopman_eigenfunction(SYS, j, x), abs=1e-10)

    def test_index_cap(self):
        with pytest.raises(ValueError):
            koopman_eigenfunction(SYS, KOOPMAN_INDEX_CAP + 1, 0.0)

    def test_scalar_and_array_evaluation_agree(self):
        assert koopman_eigenfunction(SYS, 3, 0.8) == pytest.approx(
            koopman_eigenfunction(SYS, 3, np.array([0.8]))[0]
        )


class TestPropagateGaussian:
    obs = GaussianObservable(mean=0.2, variance=0.09)

    def test_matches_conditional_expectation_oracle(self):
        k_phi = propagate_gaussian(SYS, self.obs)
        for x in np.linspace(-1.5, 1.5, 7):
            target, _ = quad(
                lambda y: self.obs(y)
                * math.exp(-((y - SYS.decay * x) ** 2) / (2 * SYS.transition_variance))
                / math.sqrt(2 * math.pi * SYS.transition_variance),
                -np.inf,
                np.inf,
            )
            assert float(k_phi(x)) == pytest.approx(target, abs=1e-12)

    def test_mean_is_preserved(self):
        # int K^t phi dmu = int phi dmu by invariance of mu
        k_phi = propagate_gaussian(SYS, self.obs)
        lhs = integrate_gaussian(k_phi, 0.0, SYS.invariant_variance, RULE)
        rhs = integrate_gaussian(self.obs, 0.0, SYS.invariant_variance, RULE)
        assert lhs == pytest.approx(rhs, abs=1e-13)

    def test_semigroup_property(self):
        # propagating twice by lag t equals propagating once by 2t
        k_phi = propagate_gaussian(SYS, self.obs)
        a = SYS.decay
        s_t_sq = self.obs.variance + SYS.transition_variance
        amp = self.obs.normalization * math.sqrt(self.obs.variance / s_t_sq)
        once = GaussianObservable(
            mean=self.obs.mean / a, variance=s_t_sq / a**2, normalization=amp
        )
        twice = propagate_gaussian(SYS, once)
        direct = propagate_gaussian(OuSystem(SYS.alpha, 2 * SYS.lag), self.obs)
        x = np.linspace(-2, 2, 11)
        np.testing.assert_allclose(twice(x), direct(x), rtol=1e-12, atol=1e-14)

    def test_short_lag_limit_recovers_observable(self):
        tiny = propagate_gaussian(OuSystem(1.0, 1e-10), self.obs)
        x = np.linspace(-1, 1, 5)
        np.testing.assert_allclose(tiny(x), self.obs(x), rtol=1e-6)


class TestPropagateKernelSection:
    def test_closed_form_matches_quadrature(self):
        sigma, z = 0.5, 0.3
        tau, nu, center = propagate_kernel_section(SYS, sigma, z)
        for x in np.linspace(-1.2, 1.2, 7):
            target, _ = quad(
                lambda y: math.exp(-((y - z) ** 2) / sigma**2)
                * math.exp(-((y - SYS.decay * x) ** 2) / (2 * SYS.transition_variance))
                / math.sqrt(2 * math.pi * SYS.transition_variance),
                -np.inf,
                np.inf,
            )
            assert tau * math.exp(-((x - center) ** 2) / nu**2) == pytest.approx(
                target, abs=1e-12
            )

    def test_amplitude_shrinks_and_width_grows(self):
        for sigma in (0.05, 0.1, 0.5):
            tau, nu, center = propagate_kernel_section(SYS, sigma, 0.3)
            assert 0 < tau < 1
            assert nu > sigma
            assert center == pytest.approx(math.exp(SYS.alpha * SYS.lag) * 0.3)

    def test_short_lag_limit(self):
        sys = OuSystem(1.0, 1e-9)
        tau, nu, center = propagate_kernel_section(sys, 0.5, 0.3)
        assert tau == pytest.approx(1.0, abs=1e-8)
        assert nu == pytest.approx(0.5, rel=1e-7)
        assert center == pytest.approx(0.3, rel=1e-8)

    def test_rejects_bad_bandwidth(self):
        with pytest.raises(ValueError):
            propagate_kernel_section(SYS, 0.0, 0.1)
