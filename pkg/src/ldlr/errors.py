"""Exception and warning types raised across the package."""


class LdlError(Exception):
    """Base class for every error raised by ldlr."""


class ParseError(LdlError):
    pass


class ValidationError(LdlError, ValueError):
    pass


class DegenerateRow(ValidationError):
    """A label row collapsed to all zeros after clamping."""


class InvalidSpec(ValidationError):
    pass


class InvalidFraction(ValidationError):
    pass


class DegenerateFeatures(ValidationError):
    pass


class BandwidthError(ValidationError):
    pass


class ShapeMismatch(ValidationError):
    pass


class LengthMismatch(ValidationError):
    pass


class InvalidDistribution(ValidationError):
    pass


class DegenerateRanks(ValidationError):
    pass


class UnknownParameter(ValidationError):
    pass


class SvdFailure(LdlError):
    pass


class SingularSystem(LdlError):
    pass


class NotConverged(LdlError):
    """Raised only when a caller asks for strict convergence."""


class NotConvergedWarning(UserWarning):
    pass
