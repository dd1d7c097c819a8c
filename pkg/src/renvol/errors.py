"""Exception types shared across the package."""


class ContractViolation(ValueError):
    """An operation was called outside its documented preconditions."""


class DomainError(ValueError):
    """A value lies outside the domain of the requested function or chart."""


class PreconditionError(ValueError):
    """A numerical precondition (e.g. criticality of a metric) is not met."""

    def __init__(self, message, **details):
        super().__init__(message)
        self.details = details


class EvaluationError(RuntimeError):
    """A functional evaluation produced a non-finite value."""

    def __init__(self, message, t=None):
        super().__init__(message)
        self.t = t
