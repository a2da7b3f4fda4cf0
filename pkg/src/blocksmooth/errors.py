"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2, NumericalFailure -> 3.
"""


class BlocksmoothError(Exception):
    """Base class for all package errors."""


class ConfigError(BlocksmoothError):
    """Invalid or inconsistent experiment configuration."""


class NumericalFailure(BlocksmoothError):
    """A numerical computation could not be completed."""


class WeightDegeneracyError(NumericalFailure):
    """All importance weights in a scope collapsed to zero.

    Carries the time index (and block, when applicable) so the failure can
    be located in a long run.
    """

    def __init__(self, message, t=None, block=None):
        super().__init__(message)
        self.t = t
        self.block = block


class CholeskyError(NumericalFailure):
    """Covariance factorisation failed even after jitter retries."""


class MStepError(NumericalFailure):
    """The EM M-step received statistics outside its domain.

    Carries the offending quantity (singular matrix or non-positive
    variance argument).
    """

    def __init__(self, message, value=None):
        super().__init__(message)
        self.value = value
