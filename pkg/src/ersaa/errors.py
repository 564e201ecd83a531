"""Exception hierarchy shared by every module."""


class ErSaaError(Exception):
    """Base class for recoverable library errors."""


class RankDeficient(ErSaaError):
    pass


class NumericalBreakdown(ErSaaError):
    pass


class InvalidSpec(ErSaaError):
    pass


class DomainError(ErSaaError):
    pass


class DegenerateResiduals(ErSaaError):
    pass


class TruthUnavailable(ErSaaError):
    pass


class SaaInfeasible(ErSaaError):
    pass


class SaaUnbounded(ErSaaError):
    pass


class RecourseInfeasible(ErSaaError):
    pass


class Unsupported(ErSaaError):
    pass


class InsufficientData(ErSaaError):
    pass


class DataError(ErSaaError):
    """Malformed input file; the message names the offending line."""


class BoundViolation(ErSaaError):
    def __init__(self, message, row=None):
        super().__init__(message)
        self.row = row
