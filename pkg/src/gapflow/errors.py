"""Exception hierarchy. Each class carries a stable error code used by the CLI."""

from __future__ import annotations


class GapflowError(Exception):
    code = "E_GAPFLOW"


class ValidationError(GapflowError, ValueError):
    code = "E_VALIDATION"


class ParseError(ValidationError):
    code = "E_PARSE"


class NegativeMass(ValidationError):
    code = "E_NEGATIVE_MASS"


class InvalidPosition(ValidationError):
    code = "E_INVALID_POSITION"


class InvalidLaw(ValidationError):
    code = "E_INVALID_LAW"


class EmptySupport(ValidationError):
    code = "E_EMPTY_SUPPORT"


class EmptyMeasure(ValidationError):
    code = "E_EMPTY_MEASURE"


class NonAtomicMeasure(ValidationError):
    code = "E_NON_ATOMIC"


class StartOutsideHull(ValidationError):
    code = "E_START_OUTSIDE_HULL"


class RateOverflow(GapflowError):
    code = "E_RATE_OVERFLOW"


class MeanMismatch(ValidationError):
    code = "E_MEAN_MISMATCH"


class NotConverged(GapflowError):
    code = "E_NOT_CONVERGED"

    def __init__(self, message: str, result=None):
        super().__init__(message)
        self.result = result


class UnknownMean(ValidationError):
    code = "E_UNKNOWN_MEAN"


class BudgetExceeded(GapflowError):
    code = "E_BUDGET_EXCEEDED"


class WrongEngine(ValidationError):
    code = "E_WRONG_ENGINE"


class MissingDeclaration(ValidationError):
    code = "E_MISSING_DECLARATION"


class ConvexityViolation(ValidationError):
    code = "E_CONVEXITY"


class NegativeTailMass(ValidationError):
    code = "E_NEGATIVE_TAIL_MASS"


class InvalidCurve(ValidationError):
    code = "E_INVALID_CURVE"
