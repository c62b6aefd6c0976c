"""Generic particle filter and the smoothing constructions built on it.

The filter runs the initialise / resample / propagate / weight loop with
pluggable proposals, potentials and resampling laws; all potentials are
handled in log space.  The output cloud supports four ways of turning one
filter run into properly weighted draws: full filter-smoother trajectories,
backward-sampled trajectories, forward-backward marginal weights and the
corresponding pair weights.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.special import logsumexp

from .errors import BadWeights, MissingMarkovPotential, PotentialNaN, ZeroNormaliser
from .weighting import VarianceReport, WeightedBatch, estimate, variance_estimate

__all__ = [
    "FeynmanKacModel",
    "ParticleCloud",
    "SmoothingOutput",
    "run_filter",
    "resample_multinomial",
    "resample_stratified",
    "resample_systematic",
    "filter_smoother_batch",
    "backward_sample",
    "fb_marginal_weights",
    "fb_pair_weights",
    "smooth_with_ci",
]


@dataclass(frozen=True)
class FeynmanKacModel:
    """Proposals and potentials driving the particle filter.

    ``sample_initial(m, rng)`` returns (m, d) states; ``sample_transition(t,
    z_prev, rng)`` propagates resampled states for t = 2..T;
    ``log_potential(t, z_prev, z_t)`` returns per-particle log potentials
    (z_prev is None at t = 1).  ``log_markov_potential(t, za, zb)``, when
    present, is the pairwise log of C_t with M_t(z_t | z_{t-1}) G_t =
    C_t(z_{t-1}, z_t); it returns an (a, b) matrix and enables the backward
    constructions.
    """

    horizon: int
    sample_initial: Callable[[int, np.random.Generator], np.ndarray]
    sample_transition: Callable[[int, np.ndarray, np.random.Generator], np.ndarray]
    log_potential: Callable[[int, Optional[np.ndarray], np.ndarray], np.ndarray]
    log_markov_potential: Optional[Callable[[int, np.ndarray, np.ndarray], np.ndarray]] = None


@dataclass
class ParticleCloud:
    """Per-step particle states, weights and ancestry of one filter run."""

    states: list
    log_weights: list
    norm_weights: list
    ancestors: list
    log_stage_sums: np.ndarray
    log_likelihood: float
    collapsed: bool
    m: int
    horizon: int

    @property
    def steps_completed(self) -> int:
        return len(self.states)


def _check_prob_vector(w: np.ndarray) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if w.ndim != 1 or w.size < 1 or np.any(w < 0) or not np.all(np.isfinite(w)):
        raise BadWeights("weights must be a finite non-negative vector")
    s = w.sum()
    if not np.isclose(s, 1.0, atol=1e-9):
        raise BadWeights("weights must sum to one")
    return w / s


def _inverse_cdf(w: np.ndarray, u: np.ndarray) -> np.ndarray:
    cdf = np.cumsum(w)
    cdf[-1] = 1.0
    return np.minimum(np.searchsorted(cdf, u, side="right"), w.size - 1)


def resample_multinomial(weights, rng: np.random.Generator, m_out: Optional[int] = None):
    w = _check_prob_vector(weights)
    m = m_out if m_out is not None else w.size
    return _inverse_cdf(w, rng.uniform(size=m))


def resample_stratified(weights, rng: np.random.Generator, m_out: Optional[int] = None):
    w = _check_prob_vector(weights)
    m = m_out if m_out is not None else w.size
    u = (np.arange(m) + rng.uniform(size=m)) / m
    return _inverse_cdf(w, u)


def resample_systematic(weights, rng: np.random.Generator, m_out: Optional[int] = None):
    w = _check_prob_vector(weights)
    m = m_out if m_out is not None else w.size
    u = (np.arange(m) + rng.uniform()) / m
    return _inverse_cdf(w, u)


def _log_pot(model, t, z_prev, z):
    lw = np.asarray(model.log_potential(t, z_prev, z), dtype=float)
    if np.any(np.isnan(lw)):
        raise PotentialNaN(f"potential at t={t} evaluated to NaN")
    return lw


def run_filter(
    model: FeynmanKacModel,
    m: int,
    resampler=resample_systematic,
    rng: Optional[np.random.Generator] = None,
) -> ParticleCloud:
    """Run the particle filter; stops immediately with U = 0 on collapse."""
    if m < 1 or model.horizon < 1:
        raise ValueError("need m >= 1 and horizon >= 1")
    rng = rng if rng is not None else np.random.default_rng()
    states, log_ws, norm_ws, ancestors = [], [], [], []
    log_stage = []
    log_lik = 0.0
    z = np.atleast_2d(np.asarray(model.sample_initial(m, rng), dtype=float))
    if z.shape[0] != m:
        z = z.reshape(m, -1)
    z_prev = None
    for t in range(1, model.horizon + 1):
        if t > 1:
            a = np.asarray(resampler(norm_ws[-1], rng))
            ancestors.append(a)
            z_prev = states[-1][a]
            z = np.atleast_2d(np.asarray(model.sample_transition(t, z_prev, rng), dtype=float))
            if z.shape[0] != m:
                z = z.reshape(m, -1)
        lw = _log_pot(model, t, z_prev, z)
        ls = float(logsumexp(lw))
        states.append(z)
        log_ws.append(lw)
        if ls == -np.inf:
            norm_ws.append(np.zeros(m))
            log_stage.append(-np.inf)
            return ParticleCloud(
                states, log_ws, norm_ws, ancestors,
                np.array(log_stage), -np.inf, True, m, model.horizon,
            )
        w = np.exp(lw - ls)
        norm_ws.append(w / w.sum())
        log_stage.append(ls)
        log_lik += ls - np.log(m)
    return ParticleCloud(
        states, log_ws, norm_ws, ancestors,
        np.array(log_stage), log_lik, False, m, model.horizon,
    )


@dataclass(frozen=True)
class SmoothingOutput:
    """Properly weighted draws extracted from one particle cloud.

    ``weights[i] * exp(log_scale)`` is the effective weight of ``draws[i]``.
    For the forward-backward variants, ``smoothing_weights`` holds the
    per-time marginal weights and ``backward_probs`` the per-time backward
    transition matrices (column j = distribution of the earlier index).
    """

    variant: str
    draws: np.ndarray
    weights: np.ndarray
    log_scale: float
    smoothing_weights: Optional[np.ndarray] = None
    backward_probs: Optional[list] = None

    def as_batch(self, theta=0.0) -> WeightedBatch:
        return WeightedBatch(
            theta=theta, weights=self.weights, draws=self.draws, log_scale=self.log_scale
        )


def _trace_paths(cloud: ParticleCloud) -> np.ndarray:
    steps = cloud.steps_completed
    m = cloud.m
    d = cloud.states[0].shape[1]
    paths = np.empty((m, steps, d))
    cur = np.arange(m)
    for t in range(steps - 1, -1, -1):
        paths[:, t] = cloud.states[t][cur]
        if t > 0:
            cur = cloud.ancestors[t - 1][cur]
    return paths


def filter_smoother_batch(cloud: ParticleCloud) -> SmoothingOutput:
    """Full ancestral trajectories weighted by U * normalised final weight."""
    paths = _trace_paths(cloud)
    if cloud.collapsed:
        return SmoothingOutput("filter-smoother", paths, np.zeros(cloud.m), -np.inf)
    return SmoothingOutput(
        "filter-smoother", paths, cloud.norm_weights[-1].copy(), cloud.log_likelihood
    )


def _require_backward(cloud: ParticleCloud, model: FeynmanKacModel):
    if model.log_markov_potential is None:
        raise MissingMarkovPotential("model has no Markov potential kernel")
    if cloud.collapsed:
        raise ZeroNormaliser("cannot smooth a collapsed filter run")


def backward_sample(
    cloud: ParticleCloud,
    model: FeynmanKacModel,
    n_trajectories: int,
    rng: np.random.Generator,
) -> SmoothingOutput:
    """Backward-sampled trajectories, each carrying weight U / n."""
    _require_backward(cloud, model)
    T = cloud.horizon
    n = int(n_trajectories)
    idx = np.empty((n, T), dtype=int)
    idx[:, T - 1] = _inverse_cdf(cloud.norm_weights[T - 1], rng.uniform(size=n))
    for t in range(T - 1, 0, -1):
        sel = cloud.states[t][idx[:, t]]
        log_c = model.log_markov_potential(t + 1, cloud.states[t - 1], sel)  # (m, n)
        with np.errstate(divide="ignore"):
            logits = np.log(cloud.norm_weights[t - 1])[:, None] + log_c
        logits -= logsumexp(logits, axis=0, keepdims=True)
        b = np.exp(logits)
        for j in range(n):
            idx[j, t - 1] = _inverse_cdf(b[:, j] / b[:, j].sum(), rng.uniform(size=1))[0]
    d = cloud.states[0].shape[1]
    draws = np.empty((n, T, d))
    for t in range(T):
        draws[:, t] = cloud.states[t][idx[:, t]]
    return SmoothingOutput(
        "backward-sample", draws, np.full(n, 1.0 / n), cloud.log_likelihood
    )


def _backward_matrices(cloud: ParticleCloud, model: FeynmanKacModel) -> list:
    """b_t matrices for t = 1..T-1; entry [i, k] = b_t(i | k)."""
    mats = []
    for t in range(1, cloud.horizon):
        log_c = model.log_markov_potential(t + 1, cloud.states[t - 1], cloud.states[t])
        with np.errstate(divide="ignore"):
            logits = np.log(cloud.norm_weights[t - 1])[:, None] + log_c
        logits -= logsumexp(logits, axis=0, keepdims=True)
        mats.append(np.exp(logits))
    return mats


def fb_marginal_weights(cloud: ParticleCloud, model: FeynmanKacModel) -> SmoothingOutput:
    """Forward-backward marginal smoothing weights for every time step.

    ``smoothing_weights[t]`` are the per-particle marginal weights at time
    t+1; the effective weight of state ``states[t][i]`` is U * weight.
    """
    _require_backward(cloud, model)
    T = cloud.horizon
    b_mats = _backward_matrices(cloud, model)
    omega_hat = np.empty((T, cloud.m))
    omega_hat[T - 1] = cloud.norm_weights[T - 1]
    for t in range(T - 2, -1, -1):
        omega_hat[t] = b_mats[t] @ omega_hat[t + 1]
    states = np.stack(cloud.states, axis=0)  # (T, m, d)
    return SmoothingOutput(
        "fb-marginal",
        states,
        omega_hat[T - 1].copy(),
        cloud.log_likelihood,
        smoothing_weights=omega_hat,
        backward_probs=b_mats,
    )


def fb_pair_weights(out: SmoothingOutput, t: int) -> np.ndarray:
    """Raw pair weights V[i, j] for the (z_{t-1}, z_t) marginal pair, t >= 2.

    Multiply by exp(out.log_scale) for effective weights; draws are
    (states[t-2][i], states[t-1][j]).
    """
    if out.smoothing_weights is None or out.backward_probs is None:
        raise MissingMarkovPotential("pair weights need a forward-backward output")
    if t < 2 or t > out.smoothing_weights.shape[0]:
        raise ValueError("pair index t must be in 2..T")
    b = out.backward_probs[t - 2]
    return b * out.smoothing_weights[t - 1][None, :]


def smooth_with_ci(
    model: FeynmanKacModel,
    m: int,
    n_repeats: int,
    h: Callable[[np.ndarray], float],
    rng: np.random.Generator,
    resampler=resample_systematic,
    quantile: float = 1.959963984540054,
):
    """Fixed-parameter smoothing estimate with a CLT confidence interval.

    Runs ``n_repeats`` independent filters, forms the ratio estimator of
    the smoothed expectation of ``h`` over trajectories and returns
    ``(estimate, v_n, (lo, hi))``.
    """
    if n_repeats < 2:
        raise ValueError("need at least two independent repeats")
    batches = []
    for _ in range(n_repeats):
        cloud = run_filter(model, m, resampler, rng)
        batches.append(filter_smoother_batch(cloud).as_batch())
    f = lambda _theta, x: h(x)
    e = estimate(batches, f)
    rep = variance_estimate(batches, f, e)
    half = quantile * np.sqrt(rep.v_n)
    return e, rep.v_n, (e - half, e + half)
