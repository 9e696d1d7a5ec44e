"""Exception hierarchy shared by all modules."""


class CvampError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(CvampError, ValueError):
    """Invalid parameters or configuration."""


class InvalidDimensionError(ConfigError):
    pass


class NumericalError(CvampError, ArithmeticError):
    """A computation ran but its result cannot be trusted."""


class TruncationError(NumericalError):
    """Probability mass escaped the truncated Fock space."""


class PostSelectionError(NumericalError):
    """A heralded operation has zero success probability on the given input."""


class QuadratureError(NumericalError):
    pass


class MassDeficitError(NumericalError):
    """A measurement grid failed to capture enough outcome probability."""


class NonHermitianError(NumericalError):
    pass
