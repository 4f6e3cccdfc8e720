"""
Exception hierarchy for the private read/write scheme.

Input problems derive from ValueError so callers that only know the builtin
still catch them; invariant violations derive from AssertionError.
"""
from typing import Optional


class SchemeError(Exception):
    """Base class for every error raised by the library"""


class InvalidInputError(SchemeError, ValueError):
    """Caller supplied something the scheme cannot accept"""


class ConfigurationError(InvalidInputError):
    """Malformed configuration document or unusable parameter value"""


class InfeasibleReadError(InvalidInputError):
    """Read phase cannot succeed (N too small or too many read dropouts)"""


class InfeasibleWriteError(InvalidInputError):
    """Write phase cannot succeed (X too small or too many write dropouts)"""


class FieldTooSmallError(InvalidInputError):
    """Field has fewer elements than distinct evaluation constants needed"""


class DimensionError(InvalidInputError):
    """Array shapes do not match the system parameters"""


class FieldContextError(InvalidInputError):
    """Operands belong to different prime fields"""


class InsufficientSharesError(InvalidInputError):
    """Not enough storages or answers to decode"""


class EnumerationBudgetExceeded(InvalidInputError):
    """Exact enumeration would exceed the configured budget"""


class FieldDivisionError(SchemeError, ZeroDivisionError):
    """Inverse of zero requested"""


class SingularMatrixError(SchemeError, ArithmeticError):
    """Linear system has no unique solution"""


class DropoutMisuseError(SchemeError, RuntimeError):
    """A dropped-out server was asked to answer or update"""


class VacuousAuditNotice(SchemeError):
    """Audit has nothing to verify for this configuration"""


class InvariantViolation(SchemeError, AssertionError):
    """A protocol invariant failed; `name` identifies which one"""

    def __init__(self, name: str, detail: Optional[str] = None):
        self.name = name
        self.detail = detail
        message = name if not detail else f"{name}: {detail}"
        super().__init__(message)
