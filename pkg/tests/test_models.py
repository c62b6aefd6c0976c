import math

import numpy as np
import pytest
from scipy.integrate import quad

from ismcmc import (
    GbmModel,
    PoissonTrendModel,
    PriorSpec,
    SvModel,
    gaussian_prior,
    half_gaussian_prior,
    laplace_fit,
    poisson_observation_family,
    poisson_prior_cutoff,
    simulate,
    sv_observation_as_signal,
    truncated_gaussian_prior,
    uniform_prior,
)


class TestPriors:
    @pytest.mark.parametrize("prior,lo,hi", [
        (uniform_prior(0.0, 3.2), -1.0, 4.0),
        (gaussian_prior(0.0, 5.0), -60.0, 60.0),
        (half_gaussian_prior(5.0), -1.0, 60.0),
        (truncated_gaussian_prior(1.5, 0.5, 0.5), 0.4, 10.0),
    ])
    def test_densities_integrate_to_one(self, prior, lo, hi):
        val, _ = quad(lambda x: math.exp(prior.log_density(x)), lo, hi, limit=200)
        assert val == pytest.approx(1.0, abs=1e-6)

    def test_support_enforced(self):
        assert uniform_prior(0.0, 1.0).log_density(-0.1) == -np.inf
        assert half_gaussian_prior(1.0).log_density(-0.01) == -np.inf
        assert truncated_gaussian_prior(1.5, 0.5, 0.5).log_density(0.49) == -np.inf

    def test_samples_in_support(self):
        rng = np.random.default_rng(0)
        spec = PriorSpec([uniform_prior(0.0, 2.0), half_gaussian_prior(0.5),
                          truncated_gaussian_prior(1.5, 0.5, 0.5)])
        for _ in range(200):
            theta = spec.sample(rng)
            assert np.isfinite(spec.log_density(theta))

    def test_joint_density_is_sum(self):
        spec = PriorSpec([uniform_prior(0.0, 2.0), gaussian_prior(0.0, 1.0)])
        expected = math.log(0.5) + float(gaussian_prior(0.0, 1.0).log_density(0.3))
        assert spec.log_density([1.0, 0.3]) == pytest.approx(expected)


class TestPoissonModel:
    def test_prior_cutoff_replaces_zeros(self):
        y = np.array([1.0, 0.0, 2.0, 7.0])
        logs = np.log(np.array([1.0, 0.1, 2.0, 7.0]))
        assert poisson_prior_cutoff(y) == pytest.approx(np.std(logs, ddof=1))

    def test_observation_family_values(self):
        fam = poisson_observation_family()
        assert fam.log_density(1.0, 0.0) == pytest.approx(-1.0)
        assert fam.d1(2.0, 0.5) == pytest.approx(2.0 - math.exp(0.5))
        assert fam.d2(2.0, 0.5) == pytest.approx(-math.exp(0.5))

    def test_zero_noise_unit_rate_poisson(self):
        model = PoissonTrendModel()
        rng = np.random.default_rng(1)
        z, y = model.simulate([0.0, 0.0], 2000, rng, z1=[0.0, 0.0])
        assert np.all(z == 0.0)
        assert abs(y.mean() - 1.0) < 3 / math.sqrt(2000)

    def test_simulation_reproducible_and_seed_sensitive(self):
        model = PoissonTrendModel()
        z1, y1 = model.simulate([0.1, 0.01], 50, np.random.default_rng(2))
        z2, y2 = model.simulate([0.1, 0.01], 50, np.random.default_rng(2))
        z3, y3 = model.simulate([0.1, 0.01], 50, np.random.default_rng(3))
        assert np.array_equal(z1, z2) and np.array_equal(y1, y2)
        assert not np.array_equal(y1, y3)

    def test_dynamics_shapes(self):
        dyn = PoissonTrendModel().dynamics([0.1, 0.01], 10)
        assert dyn.dim == 2 and dyn.horizon == 10
        assert np.allclose(dyn.P1, 0.1 * np.eye(2))


class TestSvModel:
    def test_observation_family_derivatives(self):
        fam = sv_observation_as_signal()
        # mode condition: y^2 e^{-s} = 1 makes the gradient vanish
        y = 1.3
        s = math.log(y**2)
        assert fam.d1(y, s) == pytest.approx(0.0, abs=1e-12)
        for s in (-2.0, 0.0, 3.0):
            assert fam.d2(0.7, s) < 0

    def test_zero_return_not_concave(self):
        fam = sv_observation_as_signal()
        assert fam.d2(0.0, 0.3) == 0.0  # triggers NonConcave inside laplace_fit

    def test_sigma_zero_constant_volatility(self):
        model = SvModel()
        z, y = model.simulate([0.5, 0.9, 0.0], 100, np.random.default_rng(4))
        assert np.allclose(z, 0.5)

    def test_stationary_variance_matches_long_run(self):
        model = SvModel()
        z, _ = model.simulate([0.0, 0.9, 0.2], 10**5, np.random.default_rng(5))
        target = 0.2**2 / (1 - 0.9**2)
        # autocorrelated chain: s.e. of the variance inflated by (1+phi^2)/(1-phi^2)
        se = target * math.sqrt(2.0 / 10**5 * (1 + 0.9**2) / (1 - 0.9**2))
        assert abs(z.var() - target) < 3 * se

    def test_laplace_converges_for_prior_draws(self):
        model = SvModel()
        rng = np.random.default_rng(6)
        zsim, y = model.simulate([0.2, 0.9, 0.3], 20, np.random.default_rng(7))
        fam = model.observation_family()
        n_ok = 0
        for _ in range(100):
            theta = model.prior().sample(rng)
            if abs(theta[1]) >= 1.0 or theta[2] == 0.0:
                continue
            dyn = model.dynamics(theta, 20)
            fit = laplace_fit(dyn, fam, y, init_signal=model.init_signal(y))
            assert fit.converged and fit.iterations <= 25
            n_ok += 1
        assert n_ok > 90


class TestGbmModel:
    def test_deterministic_limit(self):
        model = GbmModel()
        z, y = model.simulate([0.05, 1e-9, 1e-9], 10, np.random.default_rng(8), level=10)
        assert np.allclose(z[:, 0], np.exp(0.05 * np.arange(1, 11)), rtol=1e-4)

    def test_observations_centre_on_log_path(self):
        model = GbmModel()
        rng = np.random.default_rng(9)
        z, y = model.simulate([0.05, 0.3, 0.01], 2000, rng, level=6)
        assert np.std(y - np.log(z[:, 0])) < 0.02

    def test_prior_supports(self):
        prior = GbmModel().prior()
        assert prior.log_density([0.05, 0.3, 1.0]) > -np.inf
        assert prior.log_density([-0.01, 0.3, 1.0]) == -np.inf
        assert prior.log_density([0.05, 0.3, 0.4]) == -np.inf


def test_simulate_dispatch():
    z, y = simulate(PoissonTrendModel(), [0.1, 0.01], 10, np.random.default_rng(10))
    assert z.shape == (10, 2) and y.shape == (10,)
