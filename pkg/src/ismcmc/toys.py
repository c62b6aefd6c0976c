"""Tiny discrete and Gaussian models used by the test oracles.

These are deliberately small enough to solve exactly by enumeration or
quadrature, which makes them the reference points for the unbiasedness and
variance checks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lgssm import LinearGaussianDynamics, ObservationFamily
from .models import poisson_observation_family
from .smc import FeynmanKacModel
from .weighting import WeightedBatch

__all__ = [
    "two_state_hmm_model",
    "DiscreteTarget",
    "discrete_mh_chain",
    "poisson_local_level",
    "gaussian_local_level",
]


def two_state_hmm_model(trans, emit, init, y) -> FeynmanKacModel:
    """Bootstrap-style filter model for a finite HMM.

    ``trans[i, j]`` is the transition probability i -> j, ``emit[i, k]``
    the probability of symbol k in state i, ``init`` the initial law, and
    ``y`` the observed symbol indices.  States are carried as floats.
    """
    trans = np.asarray(trans, dtype=float)
    emit = np.asarray(emit, dtype=float)
    init = np.asarray(init, dtype=float)
    y = np.asarray(y, dtype=int)
    n_states = init.size

    def sample_initial(m, rng):
        return rng.choice(n_states, size=m, p=init).astype(float)[:, None]

    def sample_transition(t, z_prev, rng):
        idx = z_prev[:, 0].astype(int)
        u = rng.uniform(size=idx.size)
        cdf = np.cumsum(trans, axis=1)
        nxt = (u[:, None] > cdf[idx]).sum(axis=1)
        return nxt.astype(float)[:, None]

    def log_potential(t, z_prev, z):
        with np.errstate(divide="ignore"):
            return np.log(emit[z[:, 0].astype(int), y[t - 1]])

    def log_markov_potential(t, za, zb):
        ia = za[:, 0].astype(int)
        ib = zb[:, 0].astype(int)
        with np.errstate(divide="ignore"):
            return np.log(trans[np.ix_(ia, ib)] * emit[ib, y[t - 1]][None, :])

    return FeynmanKacModel(
        horizon=y.size,
        sample_initial=sample_initial,
        sample_transition=sample_transition,
        log_potential=log_potential,
        log_markov_potential=log_markov_potential,
    )


@dataclass(frozen=True)
class DiscreteTarget:
    """Finite target / approximation pair with exact importance weights.

    ``pi`` and ``pi_a`` are probability vectors over the same atoms; the
    exact-weight batch at atom k has the single weight pi[k] / pi_a[k].
    """

    pi: np.ndarray
    pi_a: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "pi", np.asarray(self.pi, dtype=float))
        object.__setattr__(self, "pi_a", np.asarray(self.pi_a, dtype=float))
        for name in ("pi", "pi_a"):
            v = getattr(self, name)
            if np.any(v <= 0) or not np.isclose(v.sum(), 1.0):
                raise ValueError(f"{name} must be a strictly positive probability vector")

    @property
    def n_atoms(self) -> int:
        return self.pi.size

    def exact_batch(self, k: int) -> WeightedBatch:
        w = self.pi[k] / self.pi_a[k]
        return WeightedBatch(theta=float(k), weights=np.array([w]), draws=np.array([float(k)]))

    def expectation(self, f) -> float:
        return float(sum(self.pi[k] * f(float(k)) for k in range(self.n_atoms)))


def discrete_mh_chain(pi_a, n_iters: int, rng: np.random.Generator) -> np.ndarray:
    """Metropolis chain on finite atoms with a uniform independent proposal."""
    pi_a = np.asarray(pi_a, dtype=float)
    k = pi_a.size
    state = int(rng.integers(k))
    out = np.empty(n_iters, dtype=int)
    for i in range(n_iters):
        prop = int(rng.integers(k))
        if rng.uniform() < min(1.0, pi_a[prop] / pi_a[state]):
            state = prop
        out[i] = state
    return out


def poisson_local_level(sigma: float, horizon: int, p1: float = 1.0):
    """Scalar random-walk level with Poisson(e^z) observations."""
    dyn = LinearGaussianDynamics.time_invariant(
        trans=[[1.0]], noise_cov=[[sigma**2]], a1=[0.0], P1=[[p1]],
        H_row=[1.0], horizon=horizon,
    )
    return dyn, poisson_observation_family()


def gaussian_local_level(sigma: float, obs_sd: float, horizon: int, p1: float = 1.0):
    """Scalar random-walk level with N(z, obs_sd^2) observations.

    Returns dynamics plus the Gaussian observation family (for which the
    signal-space approximation is exact).
    """
    import math

    dyn = LinearGaussianDynamics.time_invariant(
        trans=[[1.0]], noise_cov=[[sigma**2]], a1=[0.0], P1=[[p1]],
        H_row=[1.0], horizon=horizon,
    )
    var = obs_sd**2

    def log_density(y, s):
        return -0.5 * (math.log(2.0 * math.pi * var) + np.square(y - s) / var)

    fam = ObservationFamily(
        log_density=log_density,
        d1=lambda y, s: (y - s) / var,
        d2=lambda y, s: np.full_like(np.asarray(s, dtype=float), -1.0 / var),
        name="gaussian",
    )
    return dyn, fam
