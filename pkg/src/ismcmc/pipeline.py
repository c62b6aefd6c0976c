"""Run orchestration: the five algorithm variants, tuning and replication.

Phase 1 simulates a cheap chain on the approximate marginal posterior
(deterministic approximation for the signal-space models, coarse-level
pseudo-marginal for the diffusion).  Phase 2 turns the jump chain into
weighted batches in parallel and assembles the self-normalised estimators.
PM and DA run the corresponding exact chains directly and need no second
phase; AI reports the uncorrected approximate answer.
"""

from __future__ import annotations

import csv
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import minimize

from .diffusion import coarse_log_likelihood, diffusion_model, fine_correction_batch
from .errors import CollapseAtAnchor, ConfigError
from .lgssm import LaplaceFit, laplace_fit, laplace_refit, psi_apf_model, bootstrap_model, \
    simulation_smoother, spdk_batch
from .mcmc import (
    ChainState,
    DaState,
    JumpRecord,
    RamAdapter,
    da_step,
    extract_jump_chain,
    gaussian_walk_proposal,
    pm_step,
    ram_update,
    rwm_step,
)
from .models import GbmModel, PoissonTrendModel, SvModel
from .smc import filter_smoother_batch, resample_systematic, run_filter
from .weighting import (
    WeightedBatch,
    convex_combine,
    estimate,
    estimate_jump,
    scale_batch,
    subsample,
    variance_estimate,
)

__all__ = [
    "RunConfig",
    "RunResult",
    "IreTable",
    "run",
    "pilot_tune_m",
    "replicate",
    "correct_parallel",
    "thin_records",
    "approximate_mle",
]

_ALGORITHMS = ("AI", "PM", "DA", "IS1", "IS2")
_WEIGHTINGS = ("SPDK", "BSF", "PSI_APF", "DIFFUSION_BSF")
_MODELS = {"poisson-trend": PoissonTrendModel, "sv": SvModel, "gbm": GbmModel}


@dataclass(frozen=True)
class RunConfig:
    """Full description of one run; see validate() for the compatibility rules."""

    model: str
    algorithm: str
    weighting: str
    approximation: str = "local"
    m: int = 10
    n_iters: int = 1000
    burnin: float = 0.5
    thinning: int = 1
    seed: int = 0
    threads: int = 1
    inflation: float = 0.0
    out: Optional[str] = None
    data: Optional[np.ndarray] = None
    data_path: Optional[str] = None
    theta_init: Optional[np.ndarray] = None
    level_coarse: int = 4
    level_fine: int = 16
    averaged_is1: bool = False
    antithetic: bool = True
    latent_times: tuple = ()
    init_step: float = 0.1

    def validate(self):
        if self.model not in _MODELS:
            raise ConfigError(f"unknown model {self.model!r}")
        if self.algorithm not in _ALGORITHMS:
            raise ConfigError(f"unknown algorithm {self.algorithm!r}")
        if self.weighting not in _WEIGHTINGS:
            raise ConfigError(f"unknown weighting {self.weighting!r}")
        if self.approximation not in ("local", "global"):
            raise ConfigError(f"unknown approximation mode {self.approximation!r}")
        if self.m < 1:
            raise ConfigError("m must be >= 1")
        if not 0.0 <= self.burnin < 1.0:
            raise ConfigError("burnin fraction must be in [0, 1)")
        if self.thinning < 1:
            raise ConfigError("thinning must be >= 1")
        if self.n_iters < 2:
            raise ConfigError("need at least two iterations")
        if (self.model == "gbm") != (self.weighting == "DIFFUSION_BSF"):
            raise ConfigError("DIFFUSION_BSF pairs exactly with the gbm model")
        if self.level_coarse >= self.level_fine:
            raise ConfigError("level_coarse must be below level_fine")
        if self.data is None and self.data_path is None:
            raise ConfigError("no observations: set data or data_path")

    def observations(self) -> np.ndarray:
        if self.data is not None:
            return np.asarray(self.data, dtype=float)
        try:
            return np.loadtxt(self.data_path, delimiter=",", ndmin=1)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read observations from {self.data_path}: {exc}")


@dataclass(frozen=True)
class RunResult:
    """Estimates and diagnostics of one run."""

    estimates: dict
    v_n: dict
    n_v_n: dict
    acc_rate: float
    acc_rate_stage2: Optional[float]
    jump_chain_length: int
    phase1_seconds: float
    phase2_seconds: float
    seed: int
    algorithm: str
    weighting: str


@dataclass(frozen=True)
class IreTable:
    """Per-functional MSE, mean run time and their product (lower is better)."""

    functionals: tuple
    mse: np.ndarray
    mean_time: float
    ire: np.ndarray
    truth: np.ndarray

    def rescaled(self, baseline: "IreTable") -> "IreTable":
        return replace(self, ire=self.ire / baseline.ire)


# --- weighters (top-level and picklable so process pools can use them) ---


@dataclass
class _LgssmWeighter:
    """Produces W = V / L_a batches for the signal-space models."""

    model_name: str
    y: np.ndarray
    weighting: str
    antithetic: bool
    anchor: Optional[tuple] = None  # (pseudo_obs, pseudo_vars) in global mode

    def _model(self):
        return _MODELS[self.model_name]()

    def fit(self, theta) -> LaplaceFit:
        model = self._model()
        dyn = model.dynamics(theta, len(self.y))
        obs = model.observation_family()
        if self.anchor is not None:
            return laplace_refit(dyn, obs, self.y, self.anchor[0], self.anchor[1])
        return laplace_fit(dyn, obs, self.y, init_signal=model.init_signal(self.y))

    def log_la(self, theta) -> float:
        return self.fit(theta).log_La

    def raw_batch(self, theta, n: int, rng) -> WeightedBatch:
        """Batch of numerators V (sums to an unbiased estimate of L)."""
        model = self._model()
        dyn = model.dynamics(theta, len(self.y))
        obs = model.observation_family()
        fit = self.fit(theta)
        if self.weighting == "SPDK":
            anti = self.antithetic and n % 2 == 0
            return spdk_batch(fit, dyn, obs, self.y, n, rng, antithetic=anti, theta=theta)
        if self.weighting == "PSI_APF":
            fk = psi_apf_model(fit, dyn, obs, self.y)
        else:
            fk = bootstrap_model(dyn, obs, self.y)
        cloud = run_filter(fk, n, resample_systematic, rng)
        return filter_smoother_batch(cloud).as_batch(theta)

    def __call__(self, theta, log_u, n, rng):
        fit = self.fit(theta)
        batch = self.raw_batch(theta, n, rng)
        batch = scale_batch(batch, -fit.log_La)
        sub = subsample(batch, rng)
        return batch, sub

    def log_lik_estimate(self, theta, rng, n):
        """(log U, one drawn trajectory) for the exact pseudo-marginal chain."""
        batch = self.raw_batch(theta, n, rng)
        total = batch.total_weight()
        log_u = -np.inf if total <= 0 else batch.log_scale + math.log(total)
        return log_u, subsample(batch, rng).draws[0]


@dataclass
class _GbmWeighter:
    """Coarse-level estimates and fine-level correction batches."""

    y: np.ndarray
    level_coarse: int
    level_fine: int

    def _pieces(self, theta):
        model = GbmModel()
        return model.sde_spec(theta, len(self.y)), model.log_obs(theta, self.y)

    def coarse_log_u(self, theta, n, rng) -> float:
        spec, log_obs = self._pieces(theta)
        return coarse_log_likelihood(spec, log_obs, n, self.level_coarse, rng)

    def coarse_draw(self, theta, n, rng):
        spec, log_obs = self._pieces(theta)
        cloud = run_filter(diffusion_model(spec, log_obs, self.level_coarse), n,
                           resample_systematic, rng)
        batch = filter_smoother_batch(cloud).as_batch(theta)
        return cloud.log_likelihood, subsample(batch, rng).draws[0]

    def fine_batch(self, theta, n, rng) -> WeightedBatch:
        spec, log_obs = self._pieces(theta)
        return fine_correction_batch(spec, log_obs, n, self.level_fine, rng, theta=theta)

    def __call__(self, theta, log_u, n, rng):
        batch = self.fine_batch(theta, n, rng)
        batch = scale_batch(batch, -log_u)
        sub = subsample(batch, rng)
        return batch, sub

    def log_lik_estimate(self, theta, rng, n):
        spec, log_obs = self._pieces(theta)
        cloud = run_filter(diffusion_model(spec, log_obs, self.level_fine), n,
                           resample_systematic, rng)
        batch = filter_smoother_batch(cloud).as_batch(theta)
        return cloud.log_likelihood, subsample(batch, rng).draws[0]


def approximate_mle(log_post, theta0) -> np.ndarray:
    """Derivative-free maximiser of an approximate log-posterior."""
    res = minimize(lambda th: -log_post(th), np.asarray(theta0, dtype=float),
                   method="Nelder-Mead", options={"xatol": 1e-5, "fatol": 1e-7, "maxiter": 400})
    return np.atleast_1d(res.x)


def thin_records(records: Sequence[JumpRecord], factor: int) -> list:
    """Keep every factor-th record, merging skipped holding times into it."""
    if factor < 1:
        raise ConfigError("thinning must be >= 1")
    if factor == 1:
        return list(records)
    out = []
    for i, r in enumerate(records):
        if i % factor == 0:
            out.append(JumpRecord(r.theta, r.holding_time, r.log_u, len(out)))
        else:
            k = out[-1]
            out[-1] = JumpRecord(k.theta, k.holding_time + r.holding_time, k.log_u, k.index)
    return out


def _correct_one(args):
    weighter, theta, log_u, n, ss = args
    rng = np.random.default_rng(ss)
    return weighter(theta, log_u, n, rng)


def correct_parallel(records, weighter, threads: int, seed, n_for_record):
    """One weighted batch (plus one sub-sampled trajectory) per jump record.

    The RNG stream of record k is the k-th spawn of the seed, so the output
    is identical for any thread count.
    """
    records = list(records)
    if not records:
        raise ConfigError("no jump records to correct")
    root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    children = root.spawn(len(records))
    payloads = [
        (weighter, r.theta, r.log_u, n_for_record(r), ss)
        for r, ss in zip(records, children)
    ]
    if threads <= 1:
        return [_correct_one(p) for p in payloads]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(_correct_one, payloads, chunksize=max(1, len(payloads) // (4 * threads))))


def _functionals(model, cfg):
    names = list(getattr(model, "theta_names", ()))
    theta_fs = [(lambda j: (lambda th, x: th[j]))(j) for j in range(len(names))]
    latent_names, latent_fs = [], []
    for t in cfg.latent_times:
        latent_names.append(f"z_{t}")
        latent_fs.append((lambda tt: (lambda th, x: float(np.asarray(x)[tt - 1, 0])))(int(t)))
    return names, theta_fs, latent_names, latent_fs


def _sample_start(cfg, prior, log_post, rng):
    if cfg.theta_init is not None:
        theta0 = np.atleast_1d(np.asarray(cfg.theta_init, dtype=float))
        if log_post(theta0) == -np.inf:
            raise ConfigError("theta_init has zero posterior density")
        return theta0
    for _ in range(200):
        theta0 = prior.sample(rng)
        if log_post(theta0) > -np.inf:
            return theta0
    raise ConfigError("could not find a starting point with positive density")


def _jump_estimates(pairs, fs):
    e = np.atleast_1d(estimate_jump(pairs, fs))
    expanded = []
    for r, b in pairs:
        expanded.extend([b] * r.holding_time)
    rep = variance_estimate(expanded, fs, e)
    return e, rep


def _unit_batch(theta, draw):
    return WeightedBatch(theta=theta, weights=np.ones(1), draws=np.asarray(draw)[None, ...])


def _chain_estimates(thetas, draws, fs):
    batches = [_unit_batch(th, d) for th, d in zip(thetas, draws)]
    e = np.atleast_1d(estimate(batches, fs))
    rep = variance_estimate(batches, fs, e)
    return e, rep


def run(config: RunConfig) -> RunResult:
    """Execute one configured run and return its estimates."""
    cfg = config
    cfg.validate()
    y = cfg.observations()
    model = _MODELS[cfg.model]()
    prior = model.prior(y)
    dim = prior.dim

    ss = np.random.SeedSequence(cfg.seed)
    ss_init, ss_phase1, ss_phase2, ss_misc = ss.spawn(4)
    rng1 = np.random.default_rng(ss_phase1)

    is_gbm = cfg.model == "gbm"
    if is_gbm:
        weighter = _GbmWeighter(y=y, level_coarse=cfg.level_coarse, level_fine=cfg.level_fine)
    else:
        weighter = _LgssmWeighter(
            model_name=cfg.model, y=y, weighting=cfg.weighting, antithetic=cfg.antithetic
        )
        if cfg.approximation == "global":
            local = weighter

            def log_post_local(th):
                lp = prior.log_density(th)
                return lp if lp == -np.inf else lp + local.log_la(th)

            start = cfg.theta_init if cfg.theta_init is not None else [
                c.dist.mean() for c in prior.components
            ]
            anchor_theta = approximate_mle(log_post_local, start)
            anchor_fit = local.fit(anchor_theta)
            weighter = replace(local, anchor=(anchor_fit.pseudo_obs, anchor_fit.pseudo_vars))

    def log_post_det(theta):
        lp = prior.log_density(theta)
        if lp == -np.inf:
            return -np.inf
        return lp + weighter.log_la(theta)

    n_burn = int(cfg.burnin * cfg.n_iters)
    adapter = RamAdapter(cfg.init_step * np.eye(dim))
    t0 = time.perf_counter()
    rng_init = np.random.default_rng(ss_init)

    thetas = np.empty((cfg.n_iters, dim))
    log_us: Optional[list] = None
    draws_per_iter: Optional[list] = None
    n_accept = 0
    n_accept2 = 0

    if cfg.algorithm in ("AI", "IS1", "IS2"):
        if is_gbm:
            theta0 = _sample_start(cfg, prior, prior.log_density, rng_init)
            log_u0 = weighter.coarse_log_u(theta0, cfg.m, rng1)
            state = ChainState(theta0, prior.log_density(theta0) + log_u0, log_u=log_u0)
            log_us = []
            for i in range(cfg.n_iters):
                propose = gaussian_walk_proposal(adapter.chol)
                res = pm_step(
                    state, propose, prior.log_density,
                    lambda th, rg: weighter.coarse_log_u(th, cfg.m, rg),
                    rng1, inflation=cfg.inflation,
                )
                state = res.state
                n_accept += res.accepted
                if i < n_burn:
                    adapter = ram_update(adapter, res.innovation, res.alpha)
                thetas[i] = state.theta
                log_us.append(state.log_u)
        else:
            theta0 = _sample_start(cfg, prior, log_post_det, rng_init)
            state = ChainState(theta0, log_post_det(theta0))
            for i in range(cfg.n_iters):
                res = rwm_step(state, log_post_det, adapter, rng1)
                state = res.state
                n_accept += res.accepted
                if i < n_burn:
                    adapter = ram_update(adapter, res.innovation, res.alpha)
                thetas[i] = state.theta

    elif cfg.algorithm == "PM":
        theta0 = _sample_start(cfg, prior, prior.log_density, rng_init)
        n_particles = cfg.m
        log_u0, traj0 = weighter.log_lik_estimate(theta0, rng1, n_particles)
        state = ChainState(theta0, prior.log_density(theta0) + log_u0, log_u=log_u0, draw=traj0)
        draws_per_iter = []
        for i in range(cfg.n_iters):
            propose = gaussian_walk_proposal(adapter.chol)
            res = pm_step(
                state, propose, prior.log_density,
                lambda th, rg: weighter.log_lik_estimate(th, rg, n_particles),
                rng1, inflation=cfg.inflation,
            )
            state = res.state
            n_accept += res.accepted
            if i < n_burn:
                adapter = ram_update(adapter, res.innovation, res.alpha)
            thetas[i] = state.theta
            draws_per_iter.append(state.draw)

    elif cfg.algorithm == "DA":
        if is_gbm:
            theta0 = _sample_start(cfg, prior, prior.log_density, rng_init)
            log_u0 = weighter.coarse_log_u(theta0, cfg.m, rng1)
            batch0, sub0 = weighter(theta0, log_u0, cfg.m, rng1)
            state = DaState(theta0, prior.log_density(theta0) + log_u0, batch0, log_u=log_u0)

            def stage1(th, rg):
                lu = weighter.coarse_log_u(th, cfg.m, rg)
                return prior.log_density(th) + lu, lu

            pseudo = True
        else:
            theta0 = _sample_start(cfg, prior, log_post_det, rng_init)
            batch0, sub0 = weighter(theta0, None, cfg.m, rng1)
            state = DaState(theta0, log_post_det(theta0), batch0)
            stage1 = log_post_det
            pseudo = False
        traj = sub0.draws[0]
        draws_per_iter = []
        pending_log_u = [None]

        if is_gbm:
            # the weights of the stage-2 batch divide by the coarse estimate
            # drawn at stage 1 for the same candidate
            def stage1_fn(th, rg):
                lp, lu = stage1(th, rg)
                pending_log_u[0] = lu
                return lp, lu

            def da_weighter(th, rg):
                b, _ = weighter(th, pending_log_u[0], cfg.m, rg)
                return b
        else:
            stage1_fn = stage1

            def da_weighter(th, rg):
                b, _ = weighter(th, None, cfg.m, rg)
                return b

        for i in range(cfg.n_iters):
            propose = gaussian_walk_proposal(adapter.chol)
            res = da_step(state, propose, stage1_fn, da_weighter, rng1,
                          pseudo_marginal=pseudo, inflation=cfg.inflation)
            if res.accepted_stage2:
                traj = subsample(res.state.batch, rng1).draws[0]
                n_accept2 += 1
            state = res.state
            n_accept += res.accepted_stage1
            if i < n_burn:
                adapter = ram_update(adapter, res.innovation, res.alpha1)
            thetas[i] = state.theta
            draws_per_iter.append(traj)
    else:
        raise ConfigError(f"unknown algorithm {cfg.algorithm!r}")

    phase1_s = time.perf_counter() - t0
    acc_rate = n_accept / cfg.n_iters

    theta_names, theta_fs, latent_names, latent_fs = _functionals(model, cfg)
    post = thetas[n_burn:]
    post_log_us = log_us[n_burn:] if log_us is not None else None

    t1 = time.perf_counter()
    if cfg.algorithm in ("PM", "DA"):
        post_draws = draws_per_iter[n_burn:]
        e_t, rep_t = _chain_estimates(post, post_draws, theta_fs)
        if latent_fs:
            e_l, rep_l = _chain_estimates(post, post_draws, latent_fs)
        jump_len = len(extract_jump_chain(post))
        phase2_s = time.perf_counter() - t1
    else:
        records = extract_jump_chain(post, post_log_us)
        records = thin_records(records, cfg.thinning)
        jump_len = len(records)
        if cfg.algorithm == "AI":
            outs = _ai_draws(records, weighter, cfg, ss_phase2, is_gbm)
            pairs = [(r, _unit_batch(r.theta, d)) for r, d in zip(records, outs)]
            sub_pairs = pairs
        else:
            if cfg.algorithm == "IS1" and not cfg.averaged_is1:
                n_for = lambda r: cfg.m * r.holding_time
            else:
                n_for = lambda r: cfg.m
            if cfg.algorithm == "IS1" and cfg.averaged_is1:
                outs = _is1_averaged(records, weighter, cfg, ss_phase2)
            else:
                outs = correct_parallel(records, weighter, cfg.threads, ss_phase2, n_for)
            pairs = [(r, b) for r, (b, _s) in zip(records, outs)]
            sub_pairs = [(r, s) for r, (_b, s) in zip(records, outs)]
        e_t, rep_t = _jump_estimates(pairs, theta_fs)
        if latent_fs:
            e_l, rep_l = _jump_estimates(sub_pairs, latent_fs)
        phase2_s = time.perf_counter() - t1

    estimates = dict(zip(theta_names, (float(v) for v in e_t)))
    v_n = dict(zip(theta_names, (float(v) for v in np.atleast_1d(rep_t.v_n))))
    n_v_n = dict(zip(theta_names, (float(v) for v in np.atleast_1d(rep_t.n_times_v_n))))
    if latent_fs:
        estimates.update(zip(latent_names, (float(v) for v in e_l)))
        v_n.update(zip(latent_names, (float(v) for v in np.atleast_1d(rep_l.v_n))))
        n_v_n.update(zip(latent_names, (float(v) for v in np.atleast_1d(rep_l.n_times_v_n))))

    result = RunResult(
        estimates=estimates, v_n=v_n, n_v_n=n_v_n,
        acc_rate=acc_rate,
        acc_rate_stage2=(n_accept2 / cfg.n_iters if cfg.algorithm == "DA" else None),
        jump_chain_length=jump_len,
        phase1_seconds=phase1_s, phase2_seconds=phase2_s,
        seed=cfg.seed, algorithm=cfg.algorithm, weighting=cfg.weighting,
    )
    if cfg.out:
        save_result(cfg, result)
    return result


def _ai_draws(records, weighter, cfg, seed, is_gbm):
    """One approximate-smoother trajectory per accepted state."""
    spawned = seed.spawn(len(records))
    out = []
    for r, child in zip(records, spawned):
        rng = np.random.default_rng(child)
        if is_gbm:
            _lu, traj = weighter.coarse_draw(r.theta, cfg.m, rng)
        else:
            model = _MODELS[cfg.model]()
            dyn = model.dynamics(r.theta, len(weighter.y))
            fit = weighter.fit(r.theta)
            traj = simulation_smoother(dyn, fit.pseudo_obs, fit.pseudo_vars, 1, False, rng)[0]
        out.append(traj)
    return out


def _is1_averaged(records, weighter, cfg, seed):
    """IS1 fallback: average holding-time many independent m-sample batches."""
    spawned = seed.spawn(len(records))
    out = []
    for r, child in zip(records, spawned):
        rng = np.random.default_rng(child)
        parts = [weighter(r.theta, r.log_u, cfg.m, rng)[0] for _ in range(r.holding_time)]
        betas = np.full(len(parts), 1.0 / len(parts))
        batch = convex_combine(parts, betas)
        out.append((batch, subsample(batch, rng)))
    return out


def pilot_tune_m(
    config: RunConfig,
    target_delta: float,
    theta_anchor,
    n_pilot: int = 24,
    m_max: int = 4096,
) -> int:
    """Double m until the s.d. of log U at the anchor drops to target_delta."""
    cfg = config
    cfg.validate()
    y = cfg.observations()
    theta = np.atleast_1d(np.asarray(theta_anchor, dtype=float))
    ss = np.random.SeedSequence(cfg.seed).spawn(1)[0]
    if cfg.model == "gbm":
        w = _GbmWeighter(y=y, level_coarse=cfg.level_coarse, level_fine=cfg.level_fine)
        log_u = lambda n, rg: w.coarse_log_u(theta, n, rg)
    else:
        w = _LgssmWeighter(model_name=cfg.model, y=y, weighting=cfg.weighting,
                           antithetic=cfg.antithetic)
        log_la = w.log_la(theta)
        log_u = lambda n, rg: w.log_lik_estimate(theta, rg, n)[0] - log_la
    any_finite = False
    m = 1
    while m <= m_max:
        rng = np.random.default_rng(ss.spawn(1)[0])
        vals = np.array([log_u(m, rng) for _ in range(n_pilot)])
        finite = vals[np.isfinite(vals)]
        if finite.size == n_pilot:
            any_finite = True
            sd = float(np.std(finite, ddof=1)) if n_pilot > 1 else 0.0
            if sd <= target_delta:
                return m
        elif finite.size > 0:
            any_finite = True
        m *= 2
    if not any_finite:
        raise CollapseAtAnchor("likelihood estimate collapsed at every trial m")
    return m_max


def replicate(
    config: RunConfig,
    n_reps: int,
    threads: int = 1,
    ground_truth: Optional[dict] = None,
) -> IreTable:
    """Independent repetitions of run() summarised as an IRE table."""
    if n_reps < 2:
        raise ConfigError("need at least two replications")
    cfg = replace(config, out=None)
    seeds = [int(np.random.SeedSequence([cfg.seed, r]).generate_state(1)[0]) for r in range(n_reps)]
    configs = [replace(cfg, seed=s) for s in seeds]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, configs))
    else:
        results = [run(c) for c in configs]
    names = tuple(results[0].estimates.keys())
    ests = np.array([[r.estimates[k] for k in names] for r in results])
    if ground_truth is None:
        truth = ests.mean(axis=0)
    else:
        truth = np.array([ground_truth[k] for k in names])
    mse = np.mean((ests - truth[None, :]) ** 2, axis=0)
    times = np.array([r.phase1_seconds + r.phase2_seconds for r in results])
    mean_time = float(times.mean())
    table = IreTable(functionals=names, mse=mse, mean_time=mean_time,
                     ire=mse * mean_time, truth=truth)
    if config.out:
        save_replicates(config, results, table)
    return table


def _config_dict(cfg: RunConfig) -> dict:
    d = asdict(cfg)
    if d.get("data") is not None:
        d["data"] = np.asarray(d["data"]).tolist()
    if d.get("theta_init") is not None:
        d["theta_init"] = np.asarray(d["theta_init"]).tolist()
    d["latent_times"] = list(d["latent_times"])
    return d


def save_result(cfg: RunConfig, result: RunResult, rep: int = 0, base: Optional[str] = None):
    """Write one run as a CSV of functionals plus a JSON manifest."""
    base = Path(base if base is not None else cfg.out)
    base.parent.mkdir(parents=True, exist_ok=True)
    with open(f"{base}.csv", "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["rep", "functional", "estimate", "n_v_n", "phase1_s", "phase2_s", "acc_rate"])
        for k, v in result.estimates.items():
            wr.writerow([rep, k, v, result.n_v_n[k],
                         result.phase1_seconds, result.phase2_seconds, result.acc_rate])
    with open(f"{base}.manifest.json", "w") as fh:
        json.dump({"config": _config_dict(cfg), "seed": result.seed}, fh, indent=2)


def save_replicates(cfg: RunConfig, results, table: IreTable):
    """Write the per-rep CSV, the IRE summary CSV and the JSON manifest."""
    base = Path(cfg.out)
    base.parent.mkdir(parents=True, exist_ok=True)
    with open(f"{base}.csv", "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["rep", "functional", "estimate", "n_v_n", "phase1_s", "phase2_s", "acc_rate"])
        for i, r in enumerate(results):
            for k, v in r.estimates.items():
                wr.writerow([i, k, v, r.n_v_n[k], r.phase1_seconds, r.phase2_seconds, r.acc_rate])
    with open(f"{base}.summary.csv", "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["functional", "mse", "mean_time_s", "ire"])
        for k, mse, ire in zip(table.functionals, table.mse, table.ire):
            wr.writerow([k, mse, table.mean_time, ire])
    with open(f"{base}.manifest.json", "w") as fh:
        json.dump(
            {"config": _config_dict(cfg), "seeds": [r.seed for r in results]}, fh, indent=2
        )
