"""Exception hierarchy shared across the package.

Estimator code raises subclasses of EstimationError so callers (CLI,
Monte-Carlo harness) can distinguish recoverable statistical failures
from programming errors.
"""


class EstimationError(Exception):
    """Base class for all estimator-level failures."""


class DimensionMismatch(EstimationError):
    """A record or array does not match the declared dimensions."""


class EmptyDataset(EstimationError):
    """A dataset with zero records where at least one is required."""


class EmptyResult(EstimationError):
    """An operation produced an empty dataset (e.g. no complete cases)."""


class MissingCovariate(EstimationError):
    """Covariate access on a record whose covariates are missing."""


class NonFiniteInput(EstimationError):
    """NaN or infinity in a numeric input that must be finite."""


class LengthMismatch(EstimationError):
    """Two aligned arrays have different lengths."""


class AllZeroWeights(EstimationError):
    """A weighted fit received weights that sum to zero."""


class UnsolvableSystem(EstimationError):
    """A linear system stayed singular beyond the ridge escalation cap."""


class SingularProjection(EstimationError):
    """A projection system stayed singular beyond the ridge escalation cap."""


class SingularSystem(EstimationError):
    """A quadratic programme stayed singular beyond the ridge escalation cap."""


class DegenerateTarget(EstimationError):
    """A target with no information (e.g. no observed records at all)."""


class EmptyArm(EstimationError):
    """No records in a treatment arm required by the requested profile."""


class MissingTrueX(EstimationError):
    """Oracle estimation requested on data without true covariates."""


class InsufficientCompleteCases(EstimationError):
    """Too few complete cases to fit the requested model."""


class ConfigError(EstimationError):
    """Invalid run configuration."""
