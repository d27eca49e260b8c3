"""Exception and warning types shared across the package."""


class GpsLabError(Exception):
    """Base class for package errors."""


class DomainError(GpsLabError, ValueError):
    """An argument lies outside the supported domain."""


class DimensionMismatchError(GpsLabError, ValueError):
    pass


class UnheraldableError(GpsLabError):
    """The requested heralding outcome has (numerically) zero probability."""

    def __init__(self, message, probability=0.0):
        super().__init__(message)
        self.probability = probability


class ContractError(GpsLabError, ValueError):
    """An input file or document violates its format contract.

    ``field`` names the first offending field, when known.
    """

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class NumericalError(GpsLabError, ArithmeticError):
    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration


class TruncationWarning(UserWarning):
    """Fock-space truncation discarded noticeable norm."""


class ModelMismatchWarning(UserWarning):
    """A state is poorly described by the fitted target family."""


class GridWarning(UserWarning):
    pass
