"""Exception types shared across modules."""


class DomainError(ValueError):
    """An argument lies outside the domain an operation is defined on."""


class AccuracyError(ArithmeticError):
    """A numerical procedure did not reach its requested tolerance."""

    def __init__(self, message, estimate=None):
        super().__init__(message)
        self.estimate = estimate


class DivergenceError(ArithmeticError):
    """A solver state became non-finite or exceeded the divergence guard."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step
