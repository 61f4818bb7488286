"""Exception types shared across the package."""


class InvalidSpecError(ValueError):
    """An environment or configuration failed validation.

    ``field`` names the offending key so the CLI can report it.
    """

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class ImprimitiveError(ValueError):
    """A nonnegative matrix is reducible or periodic."""


class ConvergenceError(RuntimeError):
    """An iterative solver hit its iteration cap before meeting tolerance."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations
