"""Phase-1 samplers on the approximate marginal posterior.

Random-walk Metropolis with robust adaptive (rank-one Cholesky) proposal
shape, pseudo-marginal Metropolis-Hastings, two-stage delayed acceptance,
and run-length extraction of the jump chain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np

from .errors import DegenerateInnovation, NegativeWeight, NonPositiveEstimate
from .weighting import WeightedBatch

__all__ = [
    "ChainState",
    "JumpRecord",
    "RamAdapter",
    "DaState",
    "rwm_step",
    "ram_update",
    "pm_step",
    "da_step",
    "extract_jump_chain",
    "expand_jump_chain",
    "gaussian_walk_proposal",
]


@dataclass(frozen=True)
class ChainState:
    """Current chain position with its cached approximate log-posterior.

    ``log_u`` is the log likelihood estimate retained by a pseudo-marginal
    chain (None for deterministic approximations); ``draw`` is an optional
    latent payload carried along (e.g. a retained trajectory).
    """

    theta: np.ndarray
    log_post_approx: float
    log_u: Optional[float] = None
    draw: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, "theta", np.atleast_1d(np.asarray(self.theta, dtype=float)))


@dataclass(frozen=True)
class JumpRecord:
    """One accepted state with the number of iterations spent there."""

    theta: np.ndarray
    holding_time: int
    log_u: Optional[float] = None
    index: int = 0


@dataclass(frozen=True)
class RamAdapter:
    """Lower-triangular proposal shape with acceptance-rate adaptation.

    The update rule keeps S S^T tracking a covariance whose random-walk
    acceptance rate approaches ``target_rate``; the step size is
    eta_n = min(1, dim * n**(-step_exponent)).
    """

    chol: np.ndarray
    target_rate: float = 0.234
    step_exponent: float = 2.0 / 3.0
    iteration: int = 1

    def __post_init__(self):
        s = np.atleast_2d(np.asarray(self.chol, dtype=float))
        object.__setattr__(self, "chol", s)
        if np.any(np.diag(s) <= 0):
            raise ValueError("proposal Cholesky factor needs a positive diagonal")

    @property
    def dim(self) -> int:
        return self.chol.shape[0]


def _chol_rank1(L: np.ndarray, x: np.ndarray, downdate: bool) -> np.ndarray:
    """Cholesky factor of L L^T +/- x x^T, keeping L lower triangular."""
    L = L.copy()
    x = x.copy()
    n = x.size
    for k in range(n):
        lkk = L[k, k]
        if downdate:
            r2 = lkk * lkk - x[k] * x[k]
            r = math.sqrt(max(r2, 1e-300))
        else:
            r = math.hypot(lkk, x[k])
        c = r / lkk
        s = x[k] / lkk
        L[k, k] = r
        if k + 1 < n:
            if downdate:
                L[k + 1 :, k] = (L[k + 1 :, k] - s * x[k + 1 :]) / c
            else:
                L[k + 1 :, k] = (L[k + 1 :, k] + s * x[k + 1 :]) / c
            x[k + 1 :] = c * x[k + 1 :] - s * L[k + 1 :, k]
    return L


def ram_update(adapter: RamAdapter, z: np.ndarray, alpha: float) -> RamAdapter:
    """One rank-one adaptation step using the realised acceptance probability."""
    z = np.atleast_1d(np.asarray(z, dtype=float))
    nz = np.linalg.norm(z)
    if nz == 0.0:
        raise DegenerateInnovation("proposal innovation is the zero vector")
    d = adapter.dim
    eta = min(1.0, d * adapter.iteration ** (-adapter.step_exponent))
    c = eta * (alpha - adapter.target_rate)
    if c == 0.0:
        return replace(adapter, iteration=adapter.iteration + 1)
    u = adapter.chol @ (z / nz)
    new_chol = _chol_rank1(adapter.chol, math.sqrt(abs(c)) * u, downdate=c < 0.0)
    return replace(adapter, chol=new_chol, iteration=adapter.iteration + 1)


class RwmResult(NamedTuple):
    state: ChainState
    accepted: bool
    alpha: float
    innovation: np.ndarray


def rwm_step(
    state: ChainState,
    log_target: Callable[[np.ndarray], float],
    adapter: RamAdapter,
    rng: np.random.Generator,
) -> RwmResult:
    """One random-walk Metropolis step with proposal theta + S z."""
    z = rng.standard_normal(adapter.dim)
    proposal = state.theta + adapter.chol @ z
    lp = float(log_target(proposal))
    if lp == -np.inf:
        alpha = 0.0
    else:
        alpha = min(1.0, math.exp(min(lp - state.log_post_approx, 0.0)))
    u = rng.uniform()
    if u < alpha:
        return RwmResult(ChainState(proposal, lp), True, alpha, z)
    return RwmResult(state, False, alpha, z)


def gaussian_walk_proposal(chol: np.ndarray):
    """Symmetric Gaussian random-walk proposal for pm_step / da_step."""
    chol = np.atleast_2d(np.asarray(chol, dtype=float))

    def propose(theta, rng):
        z = rng.standard_normal(chol.shape[0])
        return theta + chol @ z, 0.0, 0.0, z

    return propose


class PmResult(NamedTuple):
    state: ChainState
    accepted: bool
    alpha: float
    innovation: Optional[np.ndarray]


def pm_step(
    state: ChainState,
    propose,
    log_prior: Callable[[np.ndarray], float],
    log_lik_estimator,
    rng: np.random.Generator,
    inflation: float = 0.0,
) -> PmResult:
    """One pseudo-marginal Metropolis-Hastings step.

    ``log_lik_estimator(theta, rng)`` returns the log of a non-negative
    unbiased likelihood estimate, optionally as ``(log_u, payload)``.  A
    -inf estimate raises unless a positive ``inflation`` is configured, in
    which case U + inflation is used instead.
    """
    proposal, log_q_fwd, log_q_rev, z = propose(state.theta, rng)
    lpr = float(log_prior(proposal))
    if lpr == -np.inf:
        u = rng.uniform()
        return PmResult(state, False, 0.0, z)
    out = log_lik_estimator(proposal, rng)
    log_u_new, payload = out if isinstance(out, tuple) else (out, None)
    log_u_new = float(log_u_new)
    if inflation > 0.0:
        log_u_new = np.logaddexp(log_u_new, math.log(inflation))
    elif log_u_new == -np.inf or np.isnan(log_u_new):
        raise NonPositiveEstimate("likelihood estimate is not strictly positive")
    log_ratio = (lpr + log_u_new + log_q_rev) - (state.log_post_approx + log_q_fwd)
    alpha = min(1.0, math.exp(min(log_ratio, 0.0)))
    u = rng.uniform()
    if u < alpha:
        new = ChainState(proposal, lpr + log_u_new, log_u=log_u_new, draw=payload)
        return PmResult(new, True, alpha, z)
    return PmResult(state, False, alpha, z)


@dataclass(frozen=True)
class DaState:
    """Delayed-acceptance chain state: position plus the retained batch."""

    theta: np.ndarray
    log_post_approx: float
    batch: WeightedBatch
    log_u: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "theta", np.atleast_1d(np.asarray(self.theta, dtype=float)))


def _log_total(batch: WeightedBatch) -> float:
    total = batch.total_weight()
    if total < 0:
        raise NegativeWeight("delayed acceptance requires non-negative weights")
    if total == 0.0:
        return -np.inf
    return batch.log_scale + math.log(total)


class DaResult(NamedTuple):
    state: DaState
    accepted_stage1: bool
    accepted_stage2: bool
    alpha1: float
    innovation: Optional[np.ndarray]


def da_step(
    state: DaState,
    propose,
    log_post_approx,
    weighter,
    rng: np.random.Generator,
    pseudo_marginal: bool = False,
    inflation: float = 0.0,
) -> DaResult:
    """Two-stage delayed acceptance step.

    Stage 1 is a Metropolis accept/reject against the approximate marginal
    (``log_post_approx(theta)``, or an estimated version drawing a fresh
    estimate when ``pseudo_marginal``); only on stage-1 acceptance is a new
    batch computed, accepted with probability min{1, sum W~ / sum W}.
    """
    proposal, log_q_fwd, log_q_rev, z = propose(state.theta, rng)
    if pseudo_marginal:
        lp_new, log_u_new = log_post_approx(proposal, rng)
        if inflation > 0.0 and log_u_new is not None:
            infl = np.logaddexp(log_u_new, math.log(inflation))
            lp_new = lp_new - (log_u_new if np.isfinite(log_u_new) else 0.0) + infl
            log_u_new = infl
        elif log_u_new == -np.inf:
            raise NonPositiveEstimate("likelihood estimate is not strictly positive")
    else:
        lp_new = float(log_post_approx(proposal))
        log_u_new = None
    if lp_new == -np.inf:
        alpha1 = 0.0
    else:
        log_ratio = (lp_new + log_q_rev) - (state.log_post_approx + log_q_fwd)
        alpha1 = min(1.0, math.exp(min(log_ratio, 0.0)))
    if rng.uniform() >= alpha1:
        return DaResult(state, False, False, alpha1, z)
    new_batch = weighter(proposal, rng)
    if np.any(new_batch.weights < 0):
        raise NegativeWeight("delayed acceptance requires non-negative weights")
    log_new, log_cur = _log_total(new_batch), _log_total(state.batch)
    if log_new == -np.inf and log_cur == -np.inf:
        alpha2 = 1.0
    elif log_new == -np.inf:
        alpha2 = 0.0
    else:
        alpha2 = min(1.0, math.exp(min(log_new - log_cur, 0.0)))
    if rng.uniform() < alpha2:
        return DaResult(DaState(proposal, lp_new, new_batch, log_u_new), True, True, alpha1, z)
    return DaResult(state, True, False, alpha1, z)


def extract_jump_chain(
    thetas: Sequence[np.ndarray],
    log_us: Optional[Sequence[float]] = None,
) -> list[JumpRecord]:
    """Run-length encode a chain into accepted states with holding times."""
    thetas = list(thetas)
    if not thetas:
        raise ValueError("need a non-empty chain")
    records: list[JumpRecord] = []
    cur = np.atleast_1d(np.asarray(thetas[0], dtype=float))
    cur_u = log_us[0] if log_us is not None else None
    count = 1
    for k in range(1, len(thetas)):
        nxt = np.atleast_1d(np.asarray(thetas[k], dtype=float))
        if np.array_equal(nxt, cur):
            count += 1
        else:
            records.append(JumpRecord(cur, count, cur_u, len(records)))
            cur, count = nxt, 1
            cur_u = log_us[k] if log_us is not None else None
    records.append(JumpRecord(cur, count, cur_u, len(records)))
    return records


def expand_jump_chain(records: Sequence[JumpRecord]) -> list[np.ndarray]:
    """Inverse of extract_jump_chain."""
    out: list[np.ndarray] = []
    for r in records:
        out.extend([r.theta] * r.holding_time)
    return out
