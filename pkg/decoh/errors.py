"""Exception hierarchy for decoh.

Every error carries the CLI exit code it maps to, so the command-line front
end can translate failures without inspecting messages.
"""


class DecohError(Exception):
    """Base class for all errors raised by decoh."""

    exit_code = 1


class ValidationError(DecohError, ValueError):
    """Input rejected before any computation ran."""

    exit_code = 2


class NonPositiveFrequency(ValidationError):
    pass


class EmptyChannelList(ValidationError):
    pass


class NegativeDipoleStrength(ValidationError):
    pass


class NegativeSeparation(ValidationError):
    pass


class NonPositiveDuration(ValidationError):
    pass


class InvalidPath(ValidationError):
    pass


class DimensionMismatch(ValidationError):
    pass


class InvalidCutoff(ValidationError):
    pass


class GridTooCoarse(ValidationError):
    pass


class GridMismatch(ValidationError):
    pass


class TooFewPoints(ValidationError):
    pass


class NoSignChange(ValidationError):
    pass


class NegativeLocalRate(ValidationError):
    pass


class ConfigError(ValidationError):
    """Run configuration is malformed or incomplete."""


class NumericalError(DecohError, ArithmeticError):
    """A computation ran but could not meet its accuracy contract."""

    exit_code = 3


class QuadratureNotConverged(NumericalError):
    pass


NotConverged = QuadratureNotConverged


class NonLinearGrowth(NumericalError):
    """Decoherence functional is not linear in Δt over the fitted tail."""


class CrosscheckFailed(DecohError):
    exit_code = 4
