"""Importance-sampling corrected approximate-marginal MCMC for state space models."""

from .errors import (
    BadSimplex,
    BadWeights,
    CollapseAtAnchor,
    ConfigError,
    DegenerateInnovation,
    InvalidHoldingTime,
    IsMcmcError,
    MissingMarkovPotential,
    NegativeWeight,
    NonConcave,
    NonFinite,
    NonPositiveDensity,
    NonPositiveEstimate,
    PotentialNaN,
    SingularInnovation,
    ZeroNormaliser,
)
from .weighting import (
    EstimatorAccumulator,
    VarianceReport,
    WeightedBatch,
    convex_combine,
    estimate,
    estimate_jump,
    scale_batch,
    subsample,
    variance_estimate,
)
from .mcmc import (
    ChainState,
    DaState,
    JumpRecord,
    RamAdapter,
    da_step,
    expand_jump_chain,
    extract_jump_chain,
    gaussian_walk_proposal,
    pm_step,
    ram_update,
    rwm_step,
)
from .smc import (
    FeynmanKacModel,
    ParticleCloud,
    SmoothingOutput,
    backward_sample,
    fb_marginal_weights,
    fb_pair_weights,
    filter_smoother_batch,
    resample_multinomial,
    resample_stratified,
    resample_systematic,
    run_filter,
    smooth_with_ci,
)
from .lgssm import (
    KalmanResult,
    LaplaceFit,
    LinearGaussianDynamics,
    ObservationFamily,
    bootstrap_model,
    kalman_loglik,
    kalman_smoother,
    laplace_fit,
    laplace_refit,
    psi_apf_model,
    simulation_smoother,
    spdk_batch,
)
from .diffusion import (
    LevelConfig,
    SdeSpec,
    coarse_log_likelihood,
    diffusion_model,
    fine_correction_batch,
    milstein_transition,
)
from .models import (
    ComponentPrior,
    GbmModel,
    PoissonTrendModel,
    PriorSpec,
    SvModel,
    gaussian_prior,
    half_gaussian_prior,
    poisson_observation_family,
    poisson_prior_cutoff,
    simulate,
    sv_observation_as_signal,
    truncated_gaussian_prior,
    uniform_prior,
)
from .pipeline import (
    IreTable,
    RunConfig,
    RunResult,
    approximate_mle,
    correct_parallel,
    pilot_tune_m,
    replicate,
    run,
    thin_records,
)

__version__ = "0.1.0"
