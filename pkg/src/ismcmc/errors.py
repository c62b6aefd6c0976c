"""Exception hierarchy shared across the package."""


class IsMcmcError(Exception):
    """Base class for all package errors."""


class ZeroNormaliser(IsMcmcError):
    """All batch total weights sum to zero (e.g. every filter collapsed)."""


class NonFinite(IsMcmcError):
    """A weighted sum or simulated state became NaN or infinite."""


class InvalidHoldingTime(IsMcmcError):
    """A jump record carries a holding time below one."""


class NegativeWeight(IsMcmcError):
    """Negative weight where only non-negative weights are valid."""


class BadSimplex(IsMcmcError):
    """Mixture coefficients are negative or do not sum to one."""


class DegenerateInnovation(IsMcmcError):
    """Proposal innovation vector is exactly zero; no direction to adapt."""


class NonPositiveEstimate(IsMcmcError):
    """Likelihood estimate is zero or negative and no inflation configured."""


class PotentialNaN(IsMcmcError):
    """A particle potential evaluated to NaN or a negative number."""


class BadWeights(IsMcmcError):
    """Resampling weights are not a valid probability vector."""


class MissingMarkovPotential(IsMcmcError):
    """Backward smoothing requested but the model has no Markov potential."""


class SingularInnovation(IsMcmcError):
    """Kalman innovation variance is numerically non-positive."""


class NonConcave(IsMcmcError):
    """Observation log-density is not concave in the signal at this point."""


class NonPositiveDensity(IsMcmcError):
    """Observation density can vanish; invalid for this estimator."""


class CollapseAtAnchor(IsMcmcError):
    """Pilot filters collapsed at every trial particle count."""


class ConfigError(IsMcmcError):
    """Invalid or incompatible run configuration."""
