"""Exception hierarchy. Each family maps to a CLI exit code."""


class CarbonHybridError(Exception):
    exit_code = 1


class ConfigError(CarbonHybridError, ValueError):
    exit_code = 1


class DataError(CarbonHybridError, ValueError):
    exit_code = 2


class SchemaError(DataError):
    pass


class OrderingError(DataError):
    pass


class ParseError(DataError):
    pass


class UnusableColumnError(DataError):
    pass


class InsufficientDataError(DataError):
    pass


class DataGapError(DataError):
    pass


class DomainError(CarbonHybridError, ValueError):
    """A value lies outside the domain of the requested computation."""

    exit_code = 3


class DegenerateSeriesError(DomainError):
    pass


class NonStationaryError(DomainError):
    pass


class NumericalError(CarbonHybridError, ArithmeticError):
    exit_code = 3


class TrainingDivergedError(NumericalError):
    def __init__(self, epoch: int, loss: float):
        super().__init__(f"training diverged at epoch {epoch} (loss={loss!r})")
        self.epoch = epoch
        self.loss = loss
