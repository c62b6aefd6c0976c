"""Importance-sampling type estimators built from weighted batches.

A weighted batch attaches real-valued weights to latent draws at one
parameter value.  The self-normalised ratio estimator, its jump-chain
(holding-time weighted) variant and the variance proxy v_n all reduce to
sums of per-batch weighted terms; every sum here is carried with a shared
log-magnitude shift so that likelihood-scale weights never overflow.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import (
    BadSimplex,
    InvalidHoldingTime,
    NegativeWeight,
    NonFinite,
    ZeroNormaliser,
)

__all__ = [
    "WeightedBatch",
    "VarianceReport",
    "EstimatorAccumulator",
    "estimate",
    "estimate_jump",
    "variance_estimate",
    "subsample",
    "convex_combine",
    "scale_batch",
]


@dataclass(frozen=True)
class WeightedBatch:
    """Latent draws with real weights attached to one parameter value.

    ``weights[i]`` is the weight of ``draws[i]``; the effective weight is
    ``weights[i] * exp(log_scale)``.  Weights may be negative (signed
    schemes); ``log_scale`` factors out a shared magnitude for overflow
    safety.  A batch whose weights are all zero is degenerate and its
    ``log_scale`` may be ``-inf``.
    """

    theta: np.ndarray
    weights: np.ndarray
    draws: np.ndarray
    log_scale: float = 0.0

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        d = np.asarray(self.draws)
        object.__setattr__(self, "theta", np.atleast_1d(np.asarray(self.theta, dtype=float)))
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "draws", d)
        if w.ndim != 1 or w.size < 1:
            raise ValueError("weights must be a non-empty 1-d array")
        if len(d) != w.size:
            raise ValueError("weights and draws must have equal length")
        if not np.all(np.isfinite(w)):
            raise NonFinite("batch weights contain NaN or Inf")
        if not np.isfinite(self.log_scale) and not self.degenerate_zero:
            raise NonFinite("log_scale must be finite unless all weights are zero")

    @property
    def size(self) -> int:
        return self.weights.size

    @property
    def degenerate_zero(self) -> bool:
        return bool(np.all(self.weights == 0.0))

    def total_weight(self) -> float:
        """Sum of raw weights (log_scale not applied)."""
        return float(np.sum(self.weights))


@dataclass(frozen=True)
class VarianceReport:
    """Variance proxy of the ratio estimator.

    ``v_n`` estimates the squared standard error directly (not scaled by n);
    ``ess_like`` is the usual effective-sample-size style diagnostic
    ``(sum xi_k(1))^2 / sum xi_k(1)^2``.
    """

    v_n: np.ndarray
    n_times_v_n: np.ndarray
    ess_like: float


def _f_values(batch: WeightedBatch, f: Callable) -> np.ndarray:
    """Evaluate f at every draw of the batch, returning a (M,) array."""
    return np.array([float(f(batch.theta, batch.draws[i])) for i in range(batch.size)])


def _xi_terms(batches: Sequence[WeightedBatch], fs: Sequence[Callable]):
    """Raw per-batch sums xi_k(f), xi_k(1) and the log scales."""
    n = len(batches)
    xi = np.empty((n, len(fs)))
    xi1 = np.empty(n)
    ls = np.empty(n)
    for k, b in enumerate(batches):
        xi1[k] = b.total_weight()
        ls[k] = b.log_scale
        for j, f in enumerate(fs):
            xi[k, j] = float(np.dot(b.weights, _f_values(b, f)))
    return xi, xi1, ls


def _shifted(values: np.ndarray, log_scales: np.ndarray, shift: float) -> np.ndarray:
    # degenerate batches (log_scale = -inf, all-zero weights) contribute zero
    with np.errstate(invalid="ignore"):
        return np.where(np.isfinite(log_scales), values * np.exp(log_scales - shift), 0.0)


def _ratio(xi, xi1, ls, single: bool):
    finite = np.isfinite(ls)
    shift = np.max(ls[finite]) if np.any(finite) else 0.0
    num = np.sum(_shifted(xi, ls[:, None], shift), axis=0)
    den = np.sum(_shifted(xi1, ls, shift))
    if not np.all(np.isfinite(num)):
        raise NonFinite("a weighted sum xi_k(f) is NaN or Inf")
    if den == 0.0:
        raise ZeroNormaliser("sum of batch total weights is zero")
    out = num / den
    return float(out[0]) if single else out


def estimate(batches: Sequence[WeightedBatch], f) -> float | np.ndarray:
    """Self-normalised estimate sum_k xi_k(f) / sum_j xi_j(1).

    ``f`` may be a single callable ``f(theta, draw)`` or a sequence of
    callables evaluated in one pass (an array is returned in that case).
    """
    batches = list(batches)
    if not batches:
        raise ValueError("need at least one batch")
    single = callable(f)
    fs = [f] if single else list(f)
    xi, xi1, ls = _xi_terms(batches, fs)
    return _ratio(xi, xi1, ls, single)


def estimate_jump(records, f) -> float | np.ndarray:
    """Holding-time weighted estimate sum N_k xi_k(f) / sum N_j xi_j(1).

    ``records`` is a sequence of ``(jump_record, batch)`` pairs where the
    first element exposes ``holding_time``.  Internally each term is
    repeated ``N_k`` times so the result is bit-identical to calling
    :func:`estimate` on the expanded batch sequence.
    """
    records = list(records)
    if not records:
        raise ValueError("need at least one record")
    holds = [int(r.holding_time) for r, _ in records]
    if any(h < 1 for h in holds):
        raise InvalidHoldingTime("all holding times must be >= 1")
    single = callable(f)
    fs = [f] if single else list(f)
    xi, xi1, ls = _xi_terms([b for _, b in records], fs)
    reps = np.asarray(holds)
    return _ratio(np.repeat(xi, reps, axis=0), np.repeat(xi1, reps), np.repeat(ls, reps), single)


def variance_estimate(batches: Sequence[WeightedBatch], f, e_n) -> VarianceReport:
    """Variance proxy v_n = sum (xi_k(f) - xi_k(1) e_n)^2 / (sum xi_j(1))^2.

    ``e_n`` must be the :func:`estimate` of the same batches and function(s).
    """
    batches = list(batches)
    single = callable(f)
    fs = [f] if single else list(f)
    e = np.atleast_1d(np.asarray(e_n, dtype=float))
    xi, xi1, ls = _xi_terms(batches, fs)
    finite = np.isfinite(ls)
    shift = np.max(ls[finite]) if np.any(finite) else 0.0
    dev = _shifted(xi - xi1[:, None] * e[None, :], ls[:, None], shift)
    den = np.sum(_shifted(xi1, ls, shift))
    if den == 0.0:
        raise ZeroNormaliser("sum of batch total weights is zero")
    sq = np.sum(_shifted(xi1, ls, shift) ** 2)
    v = np.sum(dev**2, axis=0) / den**2
    n = len(batches)
    if single:
        v = float(v[0])
    return VarianceReport(v_n=v, n_times_v_n=n * np.asarray(v), ess_like=float(den**2 / sq))


class EstimatorAccumulator:
    """Streaming accumulator of the ratio estimator and v_n terms.

    Supports several target functions in one pass; batches may be added
    with an integer multiplicity (jump-chain holding time).  Sums are kept
    relative to a running maximum log scale so magnitudes stay bounded.
    """

    def __init__(self, fs: Sequence[Callable]):
        self.fs = list(fs)
        nf = len(self.fs)
        self.count = 0
        self.num = np.zeros(nf)
        self.den = 0.0
        self.sum_ff = np.zeros(nf)
        self.sum_f1 = np.zeros(nf)
        self.sum_11 = 0.0
        self.log_shift = -np.inf

    def add(self, batch: WeightedBatch, multiplicity: int = 1):
        if multiplicity < 1:
            raise InvalidHoldingTime("multiplicity must be >= 1")
        ls = batch.log_scale
        if np.isfinite(ls) and ls > self.log_shift:
            r = 0.0 if self.log_shift == -np.inf else np.exp(self.log_shift - ls)
            self.num *= r
            self.den *= r
            self.sum_ff *= r * r
            self.sum_f1 *= r * r
            self.sum_11 *= r * r
            self.log_shift = ls
        c = np.exp(ls - self.log_shift) if np.isfinite(ls) else 0.0
        xi1 = batch.total_weight()
        xi = np.array([float(np.dot(batch.weights, _f_values(batch, f))) for f in self.fs])
        if not np.all(np.isfinite(xi)):
            raise NonFinite("a weighted sum xi_k(f) is NaN or Inf")
        m = float(multiplicity)
        self.count += multiplicity
        self.num += m * c * xi
        self.den += m * c * xi1
        # a multiplicity-m batch stands for m identical expanded terms, so
        # the quadratic sums scale with m, not m^2
        self.sum_ff += m * c**2 * xi**2
        self.sum_f1 += m * c**2 * xi * xi1
        self.sum_11 += m * c**2 * xi1**2
        return self

    def estimate(self) -> np.ndarray:
        if self.den == 0.0:
            raise ZeroNormaliser("sum of batch total weights is zero")
        return self.num / self.den

    def variance_report(self) -> VarianceReport:
        e = self.estimate()
        v = (self.sum_ff - 2.0 * e * self.sum_f1 + e**2 * self.sum_11) / self.den**2
        v = np.maximum(v, 0.0)
        return VarianceReport(
            v_n=v,
            n_times_v_n=self.count * v,
            ess_like=float(self.den**2 / self.sum_11) if self.sum_11 > 0 else 0.0,
        )


def subsample(batch: WeightedBatch, rng: np.random.Generator) -> WeightedBatch:
    """Collapse a non-negative batch to a single draw picked by weight.

    Returns a batch of size one carrying the total weight; if the total is
    zero the first draw is kept with weight zero.
    """
    w = batch.weights
    if np.any(w < 0):
        raise NegativeWeight("sub-sampling requires non-negative weights")
    total = float(np.sum(w))
    if total == 0.0:
        idx = 0
    else:
        u = rng.uniform() * total
        idx = int(np.searchsorted(np.cumsum(w), u, side="right"))
        idx = min(idx, batch.size - 1)
    return WeightedBatch(
        theta=batch.theta,
        weights=np.array([total]),
        draws=batch.draws[idx : idx + 1],
        log_scale=batch.log_scale,
    )


def convex_combine(batches: Sequence[WeightedBatch], betas: Sequence[float]) -> WeightedBatch:
    """Mix batches at the same theta with simplex coefficients."""
    batches = list(batches)
    betas = np.asarray(betas, dtype=float)
    if betas.size != len(batches) or np.any(betas < 0) or abs(betas.sum() - 1.0) > 1e-12:
        raise BadSimplex("betas must be non-negative and sum to one")
    theta = batches[0].theta
    for b in batches[1:]:
        if not np.allclose(b.theta, theta):
            raise ValueError("batches must share theta")
    ls_all = np.array([b.log_scale for b in batches])
    finite = np.isfinite(ls_all)
    ls = np.max(ls_all[finite]) if np.any(finite) else -np.inf
    weights = np.concatenate(
        [
            beta * b.weights * (np.exp(b.log_scale - ls) if np.isfinite(b.log_scale) else 0.0)
            for beta, b in zip(betas, batches)
        ]
    )
    draws = np.concatenate([np.asarray(b.draws) for b in batches])
    return WeightedBatch(theta=theta, weights=weights, draws=draws, log_scale=ls)


def scale_batch(batch: WeightedBatch, log_factor: float) -> WeightedBatch:
    """Multiply all effective weights by exp(log_factor)."""
    return WeightedBatch(
        theta=batch.theta,
        weights=batch.weights,
        draws=batch.draws,
        log_scale=batch.log_scale + log_factor,
    )
