"""Curvature jets, the sixth renormalized volume coefficient and its conformal variations."""

__version__ = "0.1.0"

from .errors import ContractViolation, DomainError, EvaluationError, PreconditionError  # noqa: E402

__all__ = ["ContractViolation", "DomainError", "EvaluationError", "PreconditionError", "__version__"]
