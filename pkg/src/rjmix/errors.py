"""Exception types shared across the package."""


class InvalidInputError(ValueError):
    """Raised when an argument violates an operation's contract."""


class NumericFailureError(RuntimeError):
    """Raised when a sampler produces non-finite values.

    ``sweep`` holds the 1-based sweep index at which the failure was detected,
    or ``None`` when it did not happen inside a sampler loop.
    """

    def __init__(self, message: str, sweep: int | None = None):
        super().__init__(message if sweep is None else f"{message} (sweep {sweep})")
        self.sweep = sweep


class StudyFailureError(RuntimeError):
    """Raised when too many replications of a study fail numerically."""

    def __init__(self, message: str, table=None):
        super().__init__(message)
        self.table = table
