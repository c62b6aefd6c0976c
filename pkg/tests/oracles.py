"""Independent reference computations used by the tests.

Everything here is deliberately written with brute-force methods (forward
recursions on finite state spaces, dense joint-Gaussian linear algebra,
grid quadrature) and shares no code with the package internals.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import stats


# --- finite HMM by direct enumeration ---


def hmm_loglik(trans, emit, init, y) -> float:
    """Forward algorithm likelihood of the observed symbol sequence."""
    trans = np.asarray(trans, dtype=float)
    emit = np.asarray(emit, dtype=float)
    alpha = np.asarray(init, dtype=float) * emit[:, y[0]]
    ll = math.log(alpha.sum())
    alpha /= alpha.sum()
    for t in range(1, len(y)):
        alpha = (alpha @ trans) * emit[:, y[t]]
        ll += math.log(alpha.sum())
        alpha /= alpha.sum()
    return ll


def hmm_smoothed(trans, emit, init, y) -> np.ndarray:
    """Smoothed state marginals, shape (T, n_states)."""
    trans = np.asarray(trans, dtype=float)
    emit = np.asarray(emit, dtype=float)
    T = len(y)
    n = len(init)
    alpha = np.empty((T, n))
    a = np.asarray(init, dtype=float) * emit[:, y[0]]
    alpha[0] = a / a.sum()
    for t in range(1, T):
        a = (alpha[t - 1] @ trans) * emit[:, y[t]]
        alpha[t] = a / a.sum()
    beta = np.ones(n)
    out = np.empty((T, n))
    out[T - 1] = alpha[T - 1]
    for t in range(T - 2, -1, -1):
        beta = trans @ (emit[:, y[t + 1]] * beta)
        p = alpha[t] * beta
        out[t] = p / p.sum()
    return out


def hmm_smoothed_pairs(trans, emit, init, y) -> np.ndarray:
    """Smoothed pair marginals P(z_{t-1}=i, z_t=j | y), shape (T-1, n, n)."""
    trans = np.asarray(trans, dtype=float)
    emit = np.asarray(emit, dtype=float)
    T = len(y)
    n = len(init)
    alpha = np.empty((T, n))
    a = np.asarray(init, dtype=float) * emit[:, y[0]]
    alpha[0] = a / a.sum()
    for t in range(1, T):
        a = (alpha[t - 1] @ trans) * emit[:, y[t]]
        alpha[t] = a / a.sum()
    beta = np.empty((T, n))
    beta[T - 1] = 1.0
    for t in range(T - 2, -1, -1):
        beta[t] = trans @ (emit[:, y[t + 1]] * beta[t + 1])
        beta[t] /= beta[t].sum()
    out = np.empty((T - 1, n, n))
    for t in range(1, T):
        p = alpha[t - 1][:, None] * trans * (emit[:, y[t]] * beta[t])[None, :]
        out[t - 1] = p / p.sum()
    return out


# --- dense joint-Gaussian state space oracle ---


def dense_lgssm(dyn, ys, rs):
    """Exact loglik and smoothing moments via the stacked joint Gaussian.

    Builds the mean and covariance of the full latent vector by propagating
    moments, then conditions on all observations with dense linear algebra.
    Returns (loglik, smoothed_means (T, d), smoothed_covs (T, d, d),
    full conditional covariance (T*d, T*d)).
    """
    T, d = dyn.horizon, dyn.dim
    ys = np.asarray(ys, dtype=float)
    rs = np.asarray(rs, dtype=float)
    mu = np.zeros(T * d)
    sig = np.zeros((T * d, T * d))
    mu[:d] = dyn.a1
    sig[:d, :d] = dyn.P1
    for t in range(T - 1):
        a = dyn.trans[t]
        q = dyn.noise_load[t] @ dyn.noise_cov[t] @ dyn.noise_load[t].T
        s = slice(t * d, (t + 1) * d)
        s1 = slice((t + 1) * d, (t + 2) * d)
        mu[s1] = a @ mu[s] + dyn.intercept[t]
        # cross-covariances with every earlier block
        for u in range(t + 1):
            su = slice(u * d, (u + 1) * d)
            block = sig[np.ix_(range(u * d, (u + 1) * d), range(t * d, (t + 1) * d))] @ a.T
            sig[su, s1] = block
            sig[s1, su] = block.T
        sig[s1, s1] = a @ sig[s, s] @ a.T + q
    # observation matrix: one row per time, selecting H_t on block t
    Hm = np.zeros((T, T * d))
    for t in range(T):
        Hm[t, t * d : (t + 1) * d] = dyn.H[t]
    obs_cov = Hm @ sig @ Hm.T + np.diag(rs)
    resid = ys - Hm @ mu
    loglik = stats.multivariate_normal(mean=np.zeros(T), cov=obs_cov).logpdf(resid)
    gain = sig @ Hm.T @ np.linalg.inv(obs_cov)
    cond_mu = mu + gain @ resid
    cond_sig = sig - gain @ Hm @ sig
    sm = cond_mu.reshape(T, d)
    sc = np.array([cond_sig[t * d : (t + 1) * d, t * d : (t + 1) * d] for t in range(T)])
    return float(loglik), sm, sc, cond_sig


def random_dynamics(rng, T=None, d=None):
    """A random stable time-invariant model for oracle comparisons."""
    from ismcmc import LinearGaussianDynamics

    T = T if T is not None else int(rng.integers(1, 6))
    d = d if d is not None else int(rng.integers(1, 4))
    a = rng.normal(size=(d, d)) * 0.5
    b = rng.normal(size=(d, d))
    q = b @ b.T + 0.2 * np.eye(d)
    c = rng.normal(size=(d, d))
    p1 = c @ c.T + 0.2 * np.eye(d)
    return LinearGaussianDynamics.time_invariant(
        trans=a, noise_cov=q, a1=rng.normal(size=d), P1=p1,
        H_row=rng.normal(size=d), horizon=T,
        intercept=rng.normal(size=d) * 0.3,
    )


# --- grid quadrature for scalar-latent models ---


class GridPosterior:
    """Grid-based forward-backward for a scalar latent Gaussian chain.

    Handles models z_1 ~ N(a1, P1), z_{t+1} = c + phi z_t + N(0, q) with an
    arbitrary observation log-density; accuracy is set by the grid.
    """

    def __init__(self, a1, p1, phi, c, q, log_obs, T, lo=-10.0, hi=10.0, n=2001):
        self.grid = np.linspace(lo, hi, n)
        self.dz = self.grid[1] - self.grid[0]
        self.T = T
        prior = stats.norm(loc=a1, scale=math.sqrt(p1)).pdf(self.grid)
        means = c + phi * self.grid
        self.kernel = stats.norm(loc=means[:, None], scale=math.sqrt(q)).pdf(self.grid[None, :])
        self.alphas = np.empty((T, n))
        self.log_norms = np.empty(T)
        a = prior * np.exp(log_obs(0, self.grid))
        for t in range(T):
            if t > 0:
                a = (self.alphas[t - 1] @ self.kernel) * self.dz
                a = a * np.exp(log_obs(t, self.grid))
            s = np.trapezoid(a, self.grid)
            self.log_norms[t] = math.log(s)
            self.alphas[t] = a / s
        self.log_obs = log_obs
        betas = np.empty((T, n))
        betas[T - 1] = 1.0
        for t in range(T - 2, -1, -1):
            nxt = np.exp(log_obs(t + 1, self.grid)) * betas[t + 1]
            b = (self.kernel @ nxt) * self.dz
            betas[t] = b / np.max(b)
        self.gammas = self.alphas * betas
        self.gammas /= np.trapezoid(self.gammas, self.grid, axis=1)[:, None]

    @property
    def loglik(self) -> float:
        return float(np.sum(self.log_norms))

    def smoothed_mean(self, t: int) -> float:
        return float(np.trapezoid(self.grid * self.gammas[t], self.grid))

    def smoothed_expectation(self, t: int, f) -> float:
        return float(np.trapezoid(f(self.grid) * self.gammas[t], self.grid))


def lognormal_transition_moments(z0, nu, sigma, dt):
    """Exact mean/variance of geometric Brownian motion after time dt."""
    mean = z0 * math.exp(nu * dt)
    var = z0**2 * math.exp(2 * nu * dt) * (math.exp(sigma**2 * dt) - 1.0)
    return mean, var


def exact_gbm_endpoint(z0, nu, sigma, dt, brownian_increment):
    """Strong solution of GBM driven by a given Brownian increment."""
    return z0 * math.exp((nu - 0.5 * sigma**2) * dt + sigma * brownian_increment)
