"""Experiment models with their priors and observation families.

Three models: a Poisson-observed local linear trend, a stochastic
volatility model handled through the signal-space machinery, and a
geometric Brownian motion with noisy log-observations.  Priors are
composed per parameter from a small set of tagged one-dimensional
distributions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import stats
from scipy.special import gammaln

from .diffusion import SdeSpec, milstein_transition
from .lgssm import LinearGaussianDynamics, ObservationFamily

__all__ = [
    "ComponentPrior",
    "PriorSpec",
    "uniform_prior",
    "gaussian_prior",
    "half_gaussian_prior",
    "truncated_gaussian_prior",
    "PoissonTrendModel",
    "SvModel",
    "GbmModel",
    "poisson_observation_family",
    "sv_observation_as_signal",
    "poisson_prior_cutoff",
    "simulate",
]

_LOG2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class ComponentPrior:
    """One parameter's prior: a tag plus a frozen scipy distribution."""

    tag: str
    dist: object

    def log_density(self, x: float) -> float:
        return float(self.dist.logpdf(x))

    def sample(self, rng: np.random.Generator) -> float:
        return float(self.dist.rvs(random_state=rng))


def uniform_prior(a: float, b: float) -> ComponentPrior:
    return ComponentPrior("uniform", stats.uniform(loc=a, scale=b - a))


def gaussian_prior(mean: float, sd: float) -> ComponentPrior:
    return ComponentPrior("gaussian", stats.norm(loc=mean, scale=sd))


def half_gaussian_prior(sd: float) -> ComponentPrior:
    return ComponentPrior("half-gaussian", stats.halfnorm(scale=sd))


def truncated_gaussian_prior(mean: float, sd: float, lower: float) -> ComponentPrior:
    a = (lower - mean) / sd
    return ComponentPrior("truncated-gaussian", stats.truncnorm(a=a, b=np.inf, loc=mean, scale=sd))


@dataclass(frozen=True)
class PriorSpec:
    """Independent product prior over the parameter vector."""

    components: Sequence[ComponentPrior]

    def log_density(self, theta) -> float:
        theta = np.atleast_1d(theta)
        if theta.size != len(self.components):
            raise ValueError("theta dimension does not match prior")
        total = 0.0
        for c, x in zip(self.components, theta):
            lp = c.log_density(float(x))
            if lp == -np.inf:
                return -np.inf
            total += lp
        return total

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        return np.array([c.sample(rng) for c in self.components])

    @property
    def dim(self) -> int:
        return len(self.components)


def poisson_observation_family() -> ObservationFamily:
    """Poisson counts with log link: y | s ~ Poisson(e^s)."""

    def log_density(y, s):
        return y * s - np.exp(s) - gammaln(np.asarray(y, dtype=float) + 1.0)

    return ObservationFamily(
        log_density=log_density,
        d1=lambda y, s: y - np.exp(s),
        d2=lambda y, s: -np.exp(np.asarray(s, dtype=float)),
        name="poisson-log",
    )


def poisson_prior_cutoff(y: np.ndarray) -> float:
    """Scale s of the U(0, 2s) prior: sd of log counts, zeros mapped to 0.1."""
    y = np.asarray(y, dtype=float).copy()
    y[y == 0] = 0.1
    return float(np.std(np.log(y), ddof=1))


class PoissonTrendModel:
    """Local linear trend (u_t, v_t) with Poisson(e^{u_t}) observations.

    theta = (sigma_eta, sigma_xi): level and slope innovation scales.
    """

    theta_names = ("sigma_eta", "sigma_xi")

    def dynamics(self, theta, horizon: int) -> LinearGaussianDynamics:
        s_eta, s_xi = float(theta[0]), float(theta[1])
        return LinearGaussianDynamics.time_invariant(
            trans=[[1.0, 1.0], [0.0, 1.0]],
            noise_cov=np.diag([s_eta**2, s_xi**2]),
            a1=[0.0, 0.0],
            P1=0.1 * np.eye(2),
            H_row=[1.0, 0.0],
            horizon=horizon,
        )

    def observation_family(self) -> ObservationFamily:
        return poisson_observation_family()

    def prior(self, y) -> PriorSpec:
        s = poisson_prior_cutoff(y)
        return PriorSpec([uniform_prior(0.0, 2.0 * s), uniform_prior(0.0, 2.0 * s)])

    def init_signal(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float).copy()
        y[y == 0] = 0.1
        return np.log(y)

    def simulate(self, theta, horizon: int, rng: np.random.Generator, z1=None):
        s_eta, s_xi = float(theta[0]), float(theta[1])
        z = np.empty((horizon, 2))
        z[0] = rng.standard_normal(2) * math.sqrt(0.1) if z1 is None else np.asarray(z1)
        for t in range(1, horizon):
            z[t, 0] = z[t - 1, 0] + z[t - 1, 1] + s_eta * rng.standard_normal()
            z[t, 1] = z[t - 1, 1] + s_xi * rng.standard_normal()
        y = rng.poisson(np.exp(z[:, 0]))
        return z, y


def sv_observation_as_signal() -> ObservationFamily:
    """Gaussian returns with log-variance signal: y | s ~ N(0, e^s)."""

    def log_density(y, s):
        return -0.5 * (_LOG2PI + s + np.square(y) * np.exp(-s))

    return ObservationFamily(
        log_density=log_density,
        d1=lambda y, s: -0.5 + 0.5 * np.square(y) * np.exp(-s),
        d2=lambda y, s: -0.5 * np.square(y) * np.exp(-np.asarray(s, dtype=float)),
        name="sv-signal",
    )


class SvModel:
    """Stationary AR(1) log-volatility; theta = (nu, phi, sigma_eta)."""

    theta_names = ("nu", "phi", "sigma_eta")

    def dynamics(self, theta, horizon: int) -> LinearGaussianDynamics:
        nu, phi, s_eta = (float(v) for v in theta)
        if abs(phi) >= 1.0:
            raise ValueError("need |phi| < 1 for the stationary initial law")
        return LinearGaussianDynamics.time_invariant(
            trans=[[phi]],
            noise_cov=[[s_eta**2]],
            a1=[nu],
            P1=[[s_eta**2 / (1.0 - phi**2)]],
            H_row=[1.0],
            horizon=horizon,
            intercept=[nu * (1.0 - phi)],
        )

    def observation_family(self) -> ObservationFamily:
        return sv_observation_as_signal()

    def prior(self, y=None) -> PriorSpec:
        return PriorSpec([
            gaussian_prior(0.0, 5.0),
            uniform_prior(-0.9999, 0.9999),
            half_gaussian_prior(5.0),
        ])

    def init_signal(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        return np.log(np.square(y) + 1e-4)

    def simulate(self, theta, horizon: int, rng: np.random.Generator):
        nu, phi, s_eta = (float(v) for v in theta)
        z = np.empty(horizon)
        sd0 = s_eta / math.sqrt(1.0 - phi**2) if s_eta > 0 else 0.0
        z[0] = nu + sd0 * rng.standard_normal()
        for t in range(1, horizon):
            z[t] = nu + phi * (z[t - 1] - nu) + s_eta * rng.standard_normal()
        y = np.exp(z / 2.0) * rng.standard_normal(horizon)
        return z[:, None], y


class GbmModel:
    """Geometric Brownian motion with noisy log-observations.

    theta = (nu, sigma_z, sigma_y); Z starts at 1 and is observed at unit
    intervals through y_t ~ N(log Z_t, sigma_y^2).
    """

    theta_names = ("nu", "sigma_z", "sigma_y")

    def sde_spec(self, theta, horizon: int) -> SdeSpec:
        nu, s_z = float(theta[0]), float(theta[1])
        return SdeSpec(
            drift=lambda z: nu * z,
            diffusion=lambda z: s_z * z,
            diffusion_dz=lambda z: np.full_like(np.asarray(z, dtype=float), s_z),
            initial_value=1.0,
            obs_intervals=np.ones(horizon),
            positivity=True,
            linear_coeffs=(nu, s_z),
        )

    def log_obs(self, theta, y):
        s_y = float(theta[2])
        y = np.asarray(y, dtype=float)

        def f(t, z):
            return -0.5 * (_LOG2PI + 2.0 * math.log(s_y) + ((y[t - 1] - np.log(z)) / s_y) ** 2)

        return f

    def prior(self, y=None) -> PriorSpec:
        return PriorSpec([
            half_gaussian_prior(0.1),
            half_gaussian_prior(0.5),
            truncated_gaussian_prior(1.5, 0.5, 0.5),
        ])

    def simulate(self, theta, horizon: int, rng: np.random.Generator, level: int = 12):
        spec = self.sde_spec(theta, horizon)
        s_y = float(theta[2])
        z = np.empty(horizon)
        cur = np.array([spec.initial_value])
        for t in range(horizon):
            cur = milstein_transition(spec, cur, spec.obs_intervals[t], level, rng)
            z[t] = cur[0]
        y = np.log(z) + s_y * rng.standard_normal(horizon)
        return z[:, None], y


def simulate(model, theta, horizon: int, rng: np.random.Generator):
    """Forward-simulate latent path and observations for any model."""
    return model.simulate(theta, horizon, rng)
