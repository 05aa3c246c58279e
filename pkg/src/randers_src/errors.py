"""Exception hierarchy shared by all modules."""


class RandersError(Exception):
    """Base class for library errors."""


class InvariantViolation(RandersError):
    """A structural invariant (e.g. ||omega||_h < 1) fails at a queried point."""


class DegenerateDirection(RandersError):
    pass


class SingularMetric(RandersError):
    pass


class StepFailure(RandersError):
    """The adaptive step size underflowed."""


class LeftChart(RandersError):
    pass


class NotFermat(RandersError):
    """A lift needs the stationary data behind a Fermat metric."""


class DegenerateLift(RandersError):
    pass


class NotOnBoundary(RandersError):
    pass


class InsufficientSpan(RandersError):
    pass


class ParamOutOfRange(RandersError):
    pass


class NoSolution(RandersError):
    """Shooting found no connecting geodesic.

    ``coverage`` carries fan statistics for reporting.
    """

    def __init__(self, message, coverage=None):
        super().__init__(message)
        self.coverage = coverage or {}


NoConnectionFound = NoSolution


class NonConvergence(RandersError):
    def __init__(self, message, grad_norm=float("nan")):
        super().__init__(message)
        self.grad_norm = grad_norm


class ConfigError(RandersError):
    def __init__(self, message, line=None, column=None):
        if line is not None:
            message = f"{message} (line {line}, column {column})"
        super().__init__(message)
        self.line = line
        self.column = column
