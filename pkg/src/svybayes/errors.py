"""Exception hierarchy shared across the package.

The CLI maps the three top-level branches to exit codes:
configuration problems exit with 2, data problems with 3 and
numerical failures with 4.
"""


class SvyBayesError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigurationError(SvyBayesError):
    """Invalid configuration, unknown keys, or misused arguments."""

    exit_code = 2


class InvalidArgumentError(ConfigurationError):
    """An operation received arguments outside its contract."""


class NotFoundError(ConfigurationError):
    """A referenced column, parameter, or file does not exist."""


class InsufficientDrawsError(InvalidArgumentError):
    """Too few MCMC draws for the requested computation."""


class InsufficientReplicatesError(InvalidArgumentError):
    """Too few replicate weight columns for variance estimation."""


class DataError(SvyBayesError):
    """Problems with the data itself (values, not references)."""

    exit_code = 3


class InvalidWeightsError(DataError):
    """Nonpositive or non-finite survey weights."""


class DegenerateStratumError(DataError):
    """A stratum has too few PSUs for the requested method."""


class InvalidScenarioError(ConfigurationError):
    """A simulation scenario fails validation."""


class SchemeError(DataError):
    """A sampling scheme produced invalid inclusion probabilities."""


class NumericalError(SvyBayesError):
    """Non-finite values or failed numerical procedures."""

    exit_code = 4


class InitializationError(NumericalError):
    """No finite starting point found for the sampler."""


class DecompositionError(NumericalError):
    """A matrix factorization failed (e.g. Cholesky on non-PD input)."""


class AdjustmentError(NumericalError):
    """The curvature adjustment could not be applied."""


class StudyError(NumericalError):
    """Too many replication failures in a coverage study."""
