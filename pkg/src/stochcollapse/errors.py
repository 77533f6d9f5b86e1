"""Exception hierarchy shared by all modules."""


class CollapseError(Exception):
    """Base class for every error raised by the package."""


class InvalidParameterError(CollapseError, ValueError):
    pass


class DomainError(CollapseError, ValueError):
    """Raised when an operation is evaluated outside its domain (e.g. t <= 0)."""


class AlignmentError(CollapseError, ValueError):
    """Series or grids that should share a time/space axis do not."""


class NumericError(CollapseError, ArithmeticError):
    pass


class KernelOverflowError(NumericError):
    pass


class InstabilityError(NumericError):
    pass


class CoverageError(CollapseError, ValueError):
    """The spatial grid is too narrow for the requested state."""


class ValidityError(CollapseError, ValueError):
    """A representation is used outside its range of validity."""


class EstimationError(CollapseError, ValueError):
    pass


class TruncationError(NumericError):
    pass


class ConfigError(CollapseError, ValueError):
    pass
