"""Kalman filtering, iterated Laplace approximation and twisted filters.

Linear-Gaussian latent dynamics with a scalar observation signal s_t =
H_t z_t.  Non-Gaussian observation families are handled by iterating a
pseudo-observation construction to the posterior mode, which yields the
approximate marginal likelihood L_a, an exact Gaussian simulation smoother
for importance sampling, and the twisted particle filter whose proposals
are the forward conditionals of the approximate smoothing law.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from numba import njit
from scipy.linalg import solve, solve_triangular

from .errors import NonConcave, NonFinite, SingularInnovation
from .smc import FeynmanKacModel
from .weighting import WeightedBatch

__all__ = [
    "LinearGaussianDynamics",
    "ObservationFamily",
    "LaplaceFit",
    "KalmanResult",
    "kalman_loglik",
    "kalman_smoother",
    "laplace_fit",
    "laplace_refit",
    "simulation_smoother",
    "spdk_batch",
    "psi_apf_model",
    "bootstrap_model",
]

_LOG2PI = math.log(2.0 * math.pi)


def _check_cov(p: np.ndarray, name: str):
    if not np.allclose(p, p.T, atol=1e-10):
        raise ValueError(f"{name} must be symmetric")
    if p.size and np.min(np.linalg.eigvalsh(p)) < -1e-9:
        raise ValueError(f"{name} must be positive semidefinite")


@dataclass(frozen=True)
class LinearGaussianDynamics:
    """Time-varying linear-Gaussian state dynamics with a scalar signal row.

    Z_1 ~ N(a1, P1) and Z_{t+1} = trans[t] Z_t + intercept[t] + noise_load[t]
    eta_t with eta_t ~ N(0, noise_cov[t]); the observation signal at time t
    is H[t] . Z_t.
    """

    a1: np.ndarray
    P1: np.ndarray
    trans: np.ndarray
    intercept: np.ndarray
    noise_load: np.ndarray
    noise_cov: np.ndarray
    H: np.ndarray

    def __post_init__(self):
        for f in ("a1", "P1", "trans", "intercept", "noise_load", "noise_cov", "H"):
            object.__setattr__(self, f, np.asarray(getattr(self, f), dtype=float))
        d = self.a1.size
        T = self.H.shape[0]
        if self.H.shape != (T, d) or self.P1.shape != (d, d):
            raise ValueError("inconsistent dimensions")
        if T > 1 and self.trans.shape[0] != T - 1:
            raise ValueError("need horizon-1 transition slices")
        _check_cov(self.P1, "P1")
        q = self.noise_cov
        if q.size:
            if not np.allclose(q, np.swapaxes(q, -1, -2), atol=1e-10):
                raise ValueError("noise_cov must be symmetric")
            if np.min(np.linalg.eigvalsh(q)) < -1e-9:
                raise ValueError("noise_cov must be positive semidefinite")

    @classmethod
    def time_invariant(cls, trans, noise_cov, a1, P1, H_row, horizon,
                       intercept=None, noise_load=None):
        trans = np.atleast_2d(np.asarray(trans, dtype=float))
        d = trans.shape[0]
        q = np.atleast_2d(np.asarray(noise_cov, dtype=float)).shape[0]
        load = np.eye(d, q) if noise_load is None else np.asarray(noise_load, dtype=float)
        inter = np.zeros(d) if intercept is None else np.asarray(intercept, dtype=float)
        n = max(horizon - 1, 0)
        return cls(
            a1=np.asarray(a1, dtype=float).reshape(d),
            P1=np.atleast_2d(np.asarray(P1, dtype=float)),
            trans=np.broadcast_to(trans, (n, d, d)).copy(),
            intercept=np.broadcast_to(inter, (n, d)).copy(),
            noise_load=np.broadcast_to(load, (n, d, q)).copy(),
            noise_cov=np.broadcast_to(np.atleast_2d(noise_cov), (n, q, q)).copy(),
            H=np.broadcast_to(np.asarray(H_row, dtype=float), (horizon, d)).copy(),
        )

    @property
    def horizon(self) -> int:
        return self.H.shape[0]

    @property
    def dim(self) -> int:
        return self.a1.size

    def state_noise_cov(self, t: int) -> np.ndarray:
        """Covariance of the state innovation entering Z_{t+1} (t from 0)."""
        r = self.noise_load[t]
        return r @ self.noise_cov[t] @ r.T


@dataclass(frozen=True)
class ObservationFamily:
    """Scalar-signal observation log-density with its first two derivatives.

    All three callables take (y_t, s) and must be vectorised in s; d2 must
    be strictly negative wherever the Laplace iteration evaluates it.
    """

    log_density: Callable[[float, np.ndarray], np.ndarray]
    d1: Callable[[float, np.ndarray], np.ndarray]
    d2: Callable[[float, np.ndarray], np.ndarray]
    name: str = "observation"


@dataclass(frozen=True)
class KalmanResult:
    """Filter and smoother output for one pseudo-observation sequence."""

    loglik: float
    filtered_means: np.ndarray
    filtered_covs: np.ndarray
    predicted_means: np.ndarray
    predicted_covs: np.ndarray
    smoothed_means: np.ndarray
    smoothed_covs: np.ndarray
    gains: np.ndarray  # J_t for t = 1..T-1


@njit(cache=True)
def _filter_core(a1, P1, trans, intercept, rqr, H, ys, rs):
    T = ys.shape[0]
    d = a1.shape[0]
    mp = np.empty((T, d))
    pp = np.empty((T, d, d))
    mf = np.empty((T, d))
    pf = np.empty((T, d, d))
    mp[0] = a1
    pp[0] = P1
    ll = 0.0
    for t in range(T):
        h = H[t]
        ph = np.dot(pp[t], h)
        f = np.dot(h, ph) + rs[t]
        if not np.isfinite(f) or f <= 0.0:
            return ll, mp, pp, mf, pf, t
        v = ys[t] - np.dot(h, mp[t])
        k = ph / f
        ll += -0.5 * (_LOG2PI + np.log(f) + v * v / f)
        mf[t] = mp[t] + k * v
        pf[t] = pp[t] - np.outer(k, k) * f
        if t + 1 < T:
            a = trans[t]
            at = np.ascontiguousarray(a.T)
            mp[t + 1] = np.dot(a, mf[t]) + intercept[t]
            pp[t + 1] = np.dot(np.dot(a, pf[t]), at) + rqr[t]
    return ll, mp, pp, mf, pf, -1


@njit(cache=True)
def _rts_core(trans, mp, pp, mf, pf):
    T, d = mf.shape
    ms = np.empty((T, d))
    ps = np.empty((T, d, d))
    js = np.empty((max(T - 1, 0), d, d))
    ms[T - 1] = mf[T - 1]
    ps[T - 1] = pf[T - 1]
    for t in range(T - 2, -1, -1):
        at = np.ascontiguousarray(trans[t].T)
        j = np.dot(np.dot(pf[t], at), np.linalg.pinv(pp[t + 1]))
        js[t] = j
        ms[t] = mf[t] + np.dot(j, ms[t + 1] - mp[t + 1])
        jt = np.ascontiguousarray(j.T)
        ps[t] = pf[t] + np.dot(np.dot(j, ps[t + 1] - pp[t + 1]), jt)
    return ms, ps, js


def _dyn_arrays(dyn):
    cached = getattr(dyn, "_arrays", None)
    if cached is not None:
        return cached
    n = dyn.trans.shape[0] if dyn.horizon > 1 else 0
    q = dyn.noise_load.shape[-1] if n else 0
    load = dyn.noise_load.reshape(n, dyn.dim, q)
    rqr = load @ dyn.noise_cov.reshape(n, q, q) @ np.swapaxes(load, 1, 2)
    cached = (
        np.ascontiguousarray(dyn.a1),
        np.ascontiguousarray(dyn.P1),
        np.ascontiguousarray(dyn.trans.reshape(n, dyn.dim, dyn.dim)),
        np.ascontiguousarray(dyn.intercept.reshape(n, dyn.dim)),
        np.ascontiguousarray(rqr),
        np.ascontiguousarray(dyn.H),
    )
    object.__setattr__(dyn, "_arrays", cached)
    return cached


def _kalman_forward(dyn, ys, rs):
    ys = np.ascontiguousarray(np.asarray(ys, dtype=float))
    rs = np.ascontiguousarray(np.asarray(rs, dtype=float))
    if np.any(rs <= 0):
        raise SingularInnovation("pseudo-observation variances must be positive")
    a1, P1, trans, intercept, rqr, H = _dyn_arrays(dyn)
    ll, mp, pp, mf, pf, bad_t = _filter_core(a1, P1, trans, intercept, rqr, H, ys, rs)
    if bad_t >= 0:
        raise SingularInnovation(f"non-positive innovation variance at t={bad_t + 1}")
    return ll, mp, pp, mf, pf


def kalman_loglik(dyn: LinearGaussianDynamics, pseudo_obs, pseudo_vars) -> float:
    """Prediction-error-decomposition Gaussian marginal log-likelihood."""
    return _kalman_forward(dyn, pseudo_obs, pseudo_vars)[0]


def kalman_smoother(dyn: LinearGaussianDynamics, pseudo_obs, pseudo_vars) -> KalmanResult:
    """Forward filter plus backward (RTS) smoothing pass."""
    ll, mp, pp, mf, pf = _kalman_forward(dyn, pseudo_obs, pseudo_vars)
    trans = _dyn_arrays(dyn)[2]
    ms, ps, js = _rts_core(trans, mp, pp, mf, pf)
    return KalmanResult(ll, mf, pf, mp, pp, ms, ps, js)


def _gauss_logpdf(y, mean, var):
    return -0.5 * (_LOG2PI + np.log(var) + (y - mean) ** 2 / var)


@dataclass(frozen=True)
class LaplaceFit:
    """Converged pseudo-observation model and its likelihood decomposition.

    ``log_La = log_Ltilde_a + log_g - log_gtilde`` by construction, where
    log_g and log_gtilde are the true and Gaussianised observation
    log-densities evaluated along the mode path.
    """

    pseudo_obs: np.ndarray
    pseudo_vars: np.ndarray
    mode_path: np.ndarray
    mode_signal: np.ndarray
    smoother: KalmanResult
    log_Ltilde_a: float
    log_g: float
    log_gtilde: float
    iterations: int
    converged: bool

    @property
    def log_La(self) -> float:
        return self.log_Ltilde_a + self.log_g - self.log_gtilde


def _pseudo_data(obs: ObservationFamily, y, s):
    d1 = np.asarray(obs.d1(y, s), dtype=float)
    d2 = np.asarray(obs.d2(y, s), dtype=float)
    if np.any(d2 >= 0) or not np.all(np.isfinite(d2)):
        raise NonConcave("observation log-density must be strictly concave in the signal")
    r = -1.0 / d2
    return s + r * d1, r


def _assemble_fit(dyn, obs, y, ytil, rtil, res, iterations, converged):
    s_hat = np.einsum("td,td->t", dyn.H, res.smoothed_means)
    log_g = float(np.sum(obs.log_density(y, s_hat)))
    log_gtilde = float(np.sum(_gauss_logpdf(ytil, s_hat, rtil)))
    return LaplaceFit(
        pseudo_obs=ytil, pseudo_vars=rtil, mode_path=res.smoothed_means,
        mode_signal=s_hat, smoother=res, log_Ltilde_a=res.loglik,
        log_g=log_g, log_gtilde=log_gtilde,
        iterations=iterations, converged=converged,
    )


def laplace_fit(
    dyn: LinearGaussianDynamics,
    obs: ObservationFamily,
    y: np.ndarray,
    init_signal: Optional[np.ndarray] = None,
    tol: float = 1e-8,
    max_iter: int = 25,
) -> LaplaceFit:
    """Iterate pseudo-data construction and smoothing to the joint mode.

    Starts from ``init_signal`` (default zeros), builds Gaussian
    pseudo-observations from the local quadratic of the observation
    log-density, smooths, and repeats until the state mode path moves less
    than ``tol``; non-convergence is reported via the flag, not raised.
    """
    y = np.asarray(y, dtype=float)
    s = np.zeros(dyn.horizon) if init_signal is None else np.asarray(init_signal, dtype=float)
    z_old = None
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        ytil, rtil = _pseudo_data(obs, y, s)
        res = kalman_smoother(dyn, ytil, rtil)
        z_new = res.smoothed_means
        s = np.einsum("td,td->t", dyn.H, z_new)
        if z_old is not None and np.max(np.abs(z_new - z_old)) < tol:
            converged = True
            break
        z_old = z_new
    # rebuild the pseudo-data at the final mode so the fit is a fixed point
    ytil, rtil = _pseudo_data(obs, y, s)
    res = kalman_smoother(dyn, ytil, rtil)
    return _assemble_fit(dyn, obs, y, ytil, rtil, res, it, converged)


def laplace_refit(
    dyn: LinearGaussianDynamics,
    obs: ObservationFamily,
    y: np.ndarray,
    pseudo_obs: np.ndarray,
    pseudo_vars: np.ndarray,
) -> LaplaceFit:
    """Evaluate the approximation at new dynamics with frozen pseudo-data.

    This is the global-approximation path: the pseudo-observations fitted
    once at an anchor parameter are reused, so only one smoothing pass is
    needed per parameter value.
    """
    y = np.asarray(y, dtype=float)
    res = kalman_smoother(dyn, pseudo_obs, pseudo_vars)
    return _assemble_fit(dyn, obs, y, np.asarray(pseudo_obs, dtype=float),
                         np.asarray(pseudo_vars, dtype=float), res, 0, True)


def _safe_chol(p: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(p)
    except np.linalg.LinAlgError:
        w, v = np.linalg.eigh((p + p.T) / 2.0)
        return v * np.sqrt(np.clip(w, 0.0, None))


def _forward_conditionals(dyn: LinearGaussianDynamics, res: KalmanResult):
    """Regression form of the smoothing law: z_t | z_{t-1}, all data.

    Returns per-t regression matrices B_t, conditional covariance factors
    and the (mean, factor) of the time-1 marginal.  Uses the lag-one
    smoothed covariance Cov(z_{t-1}, z_t) = J_{t-1} P_t^s.
    """
    T = dyn.horizon
    bs, chols = [], []
    for t in range(1, T):
        cross = res.gains[t - 1] @ res.smoothed_covs[t]  # Cov(z_{t-1}, z_t)
        try:
            b = solve(res.smoothed_covs[t - 1], cross, assume_a="pos").T
        except np.linalg.LinAlgError:
            b = (np.linalg.pinv(res.smoothed_covs[t - 1]) @ cross).T
        cond = res.smoothed_covs[t] - b @ cross
        cond = (cond + cond.T) / 2.0
        bs.append(b)
        chols.append(_safe_chol(cond))
    return bs, chols, res.smoothed_means[0], _safe_chol(res.smoothed_covs[0])


def simulation_smoother(
    dyn: LinearGaussianDynamics,
    pseudo_obs,
    pseudo_vars,
    n_draws: int,
    antithetic: bool,
    rng: np.random.Generator,
) -> np.ndarray:
    """Exact draws (n, T, d) from the Gaussian smoothing distribution.

    Sampling runs forward through the conditionals of the smoothing law.
    With ``antithetic`` set, draws come in pairs mirrored through the
    smoothed mean path, so ``n_draws`` must be even.
    """
    if antithetic and n_draws % 2:
        raise ValueError("antithetic sampling needs an even number of draws")
    res = kalman_smoother(dyn, pseudo_obs, pseudo_vars)
    bs, chols, m1, c1 = _forward_conditionals(dyn, res)
    T, d = dyn.horizon, dyn.dim
    n = n_draws // 2 if antithetic else n_draws
    draws = np.empty((n, T, d))
    draws[:, 0] = m1 + rng.standard_normal((n, d)) @ c1.T
    for t in range(1, T):
        mean = res.smoothed_means[t] + (draws[:, t - 1] - res.smoothed_means[t - 1]) @ bs[t - 1].T
        draws[:, t] = mean + rng.standard_normal((n, d)) @ chols[t - 1].T
    if not antithetic:
        return draws
    mirrored = 2.0 * res.smoothed_means[None, :, :] - draws
    out = np.empty((n_draws, T, d))
    out[0::2] = draws
    out[1::2] = mirrored
    return out


def spdk_batch(
    fit: LaplaceFit,
    dyn: LinearGaussianDynamics,
    obs: ObservationFamily,
    y: np.ndarray,
    m: int,
    rng: np.random.Generator,
    antithetic: bool = True,
    theta=0.0,
) -> WeightedBatch:
    """Importance weights for simulation-smoother draws.

    Unnormalised log-weights are log L~_a + sum_t [log g - log g~] - log m;
    the division by the phase-1 approximate likelihood is applied by the
    caller.
    """
    y = np.asarray(y, dtype=float)
    draws = simulation_smoother(dyn, fit.pseudo_obs, fit.pseudo_vars, m, antithetic, rng)
    s = np.einsum("td,ntd->nt", dyn.H, draws)
    log_g = np.sum(obs.log_density(y[None, :], s), axis=1)
    log_gt = np.sum(_gauss_logpdf(fit.pseudo_obs[None, :], s, fit.pseudo_vars[None, :]), axis=1)
    log_v = fit.log_Ltilde_a + log_g - log_gt - math.log(m)
    if np.any(np.isnan(log_v)):
        raise NonFinite("importance log-weight is NaN")
    shift = float(np.max(log_v))
    return WeightedBatch(theta=theta, weights=np.exp(log_v - shift), draws=draws, log_scale=shift)


def _mvn_logpdf_pairwise(x, means, chol):
    """log N(x_j; means_i, chol cholᵀ) as an (a, b) matrix."""
    d = x.shape[1]
    diff = x[None, :, :] - means[:, None, :]  # (a, b, d)
    flat = diff.reshape(-1, d).T
    z = solve_triangular(chol, flat, lower=True) if d > 1 else flat / chol[0, 0]
    quad = np.sum(z * z, axis=0).reshape(diff.shape[:2])
    logdet = 2.0 * np.sum(np.log(np.diag(chol)))
    return -0.5 * (d * _LOG2PI + logdet + quad)


def psi_apf_model(
    fit: LaplaceFit,
    dyn: LinearGaussianDynamics,
    obs: ObservationFamily,
    y: np.ndarray,
) -> FeynmanKacModel:
    """Particle filter twisted by the Gaussian approximation.

    Proposals are the forward conditionals of the approximate smoothing
    law; potentials are the density ratios g/g~ with the Gaussian marginal
    likelihood folded into the first potential so that E[U] = L(theta).
    Potentials depend only on the current state, so the pairwise Markov
    potential needed by backward smoothing is available.
    """
    y = np.asarray(y, dtype=float)
    res = fit.smoother
    bs, chols, m1, c1 = _forward_conditionals(dyn, res)

    def sample_initial(m, rng):
        return m1 + rng.standard_normal((m, dyn.dim)) @ c1.T

    def sample_transition(t, z_prev, rng):
        i = t - 2
        mean = res.smoothed_means[t - 1] + (z_prev - res.smoothed_means[t - 2]) @ bs[i].T
        return mean + rng.standard_normal((z_prev.shape[0], dyn.dim)) @ chols[i].T

    def _log_g_ratio(t, z):
        s = z @ dyn.H[t - 1]
        out = obs.log_density(y[t - 1], s) - _gauss_logpdf(
            fit.pseudo_obs[t - 1], s, fit.pseudo_vars[t - 1]
        )
        if t == 1:
            out = out + fit.log_Ltilde_a
        return out

    def log_potential(t, z_prev, z):
        return _log_g_ratio(t, z)

    def log_markov_potential(t, za, zb):
        i = t - 2
        means = res.smoothed_means[t - 1] + (za - res.smoothed_means[t - 2]) @ bs[i].T
        log_m = _mvn_logpdf_pairwise(zb, means, chols[i])
        return log_m + _log_g_ratio(t, zb)[None, :]

    return FeynmanKacModel(
        horizon=dyn.horizon,
        sample_initial=sample_initial,
        sample_transition=sample_transition,
        log_potential=log_potential,
        log_markov_potential=log_markov_potential,
    )


def bootstrap_model(
    dyn: LinearGaussianDynamics,
    obs: ObservationFamily,
    y: np.ndarray,
) -> FeynmanKacModel:
    """Bootstrap filter: prior transitions, observation-density potentials."""
    y = np.asarray(y, dtype=float)
    c1 = _safe_chol(dyn.P1)
    noise_chols = [_safe_chol(dyn.state_noise_cov(t)) for t in range(dyn.horizon - 1)]
    full_rank = all(np.all(np.diag(c) > 0) for c in noise_chols)

    def sample_initial(m, rng):
        return dyn.a1 + rng.standard_normal((m, dyn.dim)) @ c1.T

    def sample_transition(t, z_prev, rng):
        i = t - 2
        mean = z_prev @ dyn.trans[i].T + dyn.intercept[i]
        return mean + rng.standard_normal((z_prev.shape[0], dyn.dim)) @ noise_chols[i].T

    def log_potential(t, z_prev, z):
        return obs.log_density(y[t - 1], z @ dyn.H[t - 1])

    log_markov = None
    if full_rank:
        def log_markov(t, za, zb):
            i = t - 2
            means = za @ dyn.trans[i].T + dyn.intercept[i]
            return _mvn_logpdf_pairwise(zb, means, noise_chols[i]) + (
                obs.log_density(y[t - 1], zb @ dyn.H[t - 1])[None, :]
            )

    return FeynmanKacModel(
        horizon=dyn.horizon,
        sample_initial=sample_initial,
        sample_transition=sample_transition,
        log_potential=log_potential,
        log_markov_potential=log_markov,
    )
