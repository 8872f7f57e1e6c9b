"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Raised when an RHS configuration is physically meaningless."""


class InfeasibleError(RuntimeError):
    """Raised when an optimizer cannot find any feasible point.

    The partially filled report (if any) is attached as ``report``.
    """

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report
