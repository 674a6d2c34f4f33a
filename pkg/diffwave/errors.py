"""
Error types for diffwave.

Every failure carries an error code and an optional fix suggestion so that
the harness can log it and write it into the run manifest as a record:

    {"error_code": ..., "message": ..., "fix_suggestion": ...}

Exit codes group the errors for the CLI:
- 2: validation (bad parameters, inadmissible pressure, bad config)
- 3: numerical failure (vacuum, CFL, shooting, degenerate fits)
- 4: output / I/O failure
"""

from typing import Any, Dict, List, Optional


class DiffwaveError(Exception):
    """Base class for every diffwave error."""

    error_code = "DIFFWAVE_ERROR"
    exit_code = 1

    def __init__(self, message: str, fix_suggestion: Optional[str] = None):
        super().__init__(message)
        self.message = message
        self.fix_suggestion = fix_suggestion

    def to_dict(self) -> Dict[str, Any]:
        """Error record in the manifest / log format."""
        record = {"error_code": self.error_code, "message": self.message}
        if self.fix_suggestion:
            record["fix_suggestion"] = self.fix_suggestion
        return record


# ========================================
# Validation family (exit 2)
# ========================================

class ValidationFailure(DiffwaveError):
    error_code = "VALIDATION_FAILURE"
    exit_code = 2


class InvalidParams(ValidationFailure):
    error_code = "INVALID_PARAMS"


class AdmissibilityViolation(ValidationFailure):
    """q'(rho) <= 0 somewhere on the admissibility band."""

    error_code = "ADMISSIBILITY_VIOLATION"

    def __init__(self, message: str, rho: Optional[float] = None, dq: Optional[float] = None):
        super().__init__(
            message,
            fix_suggestion="Increase the pressure stiffness so that p'(rho) - (a*mu/b)*rho > 0",
        )
        self.rho = rho
        self.dq = dq


class ParseError(ValidationFailure):
    error_code = "PARSE_ERROR"

    def __init__(self, message: str, line: int = 0, col: int = 0, key: Optional[str] = None):
        location = f"line {line}, col {col}: " if line else ""
        super().__init__(f"{location}{message}")
        self.line = line
        self.col = col
        self.key = key


class ValidationError(ValidationFailure):
    """Config validation failed; `errors` holds one record per problem."""

    error_code = "VALIDATION_ERROR"

    def __init__(self, errors: List[Dict[str, str]]):
        summary = "; ".join(f"{e['path']}: {e['message']}" for e in errors)
        super().__init__(f"Invalid configuration: {summary}")
        self.errors = errors

    def to_dict(self) -> Dict[str, Any]:
        record = super().to_dict()
        record["errors"] = self.errors
        return record


class WeightTooSmall(ValidationFailure):
    error_code = "WEIGHT_TOO_SMALL"


class WindowTooNarrow(ValidationFailure):
    error_code = "WINDOW_TOO_NARROW"


class OrderUnsupported(ValidationFailure):
    error_code = "ORDER_UNSUPPORTED"


class DegenerateWave(ValidationFailure):
    error_code = "DEGENERATE_WAVE"


# ========================================
# Numerical family (exit 3)
# ========================================

class NumericalFailure(DiffwaveError):
    error_code = "NUMERICAL_FAILURE"
    exit_code = 3


class NonpositiveDensity(NumericalFailure):
    error_code = "NONPOSITIVE_DENSITY"


class ShootingFailed(NumericalFailure):
    error_code = "SHOOTING_FAILED"


class ToleranceNotMet(NumericalFailure):
    error_code = "TOLERANCE_NOT_MET"


class InsufficientTail(NumericalFailure):
    error_code = "INSUFFICIENT_TAIL"


class DegenerateFit(NumericalFailure):
    error_code = "DEGENERATE_FIT"


class NonpositiveValues(NumericalFailure):
    error_code = "NONPOSITIVE_VALUES"


class CflViolation(NumericalFailure):
    error_code = "CFL_VIOLATION"


class VacuumDetected(NumericalFailure):
    error_code = "VACUUM_DETECTED"


class VacuumInducingPerturbation(NumericalFailure):
    error_code = "VACUUM_INDUCING_PERTURBATION"


class ResidualMassTooLarge(NumericalFailure):
    error_code = "RESIDUAL_MASS_TOO_LARGE"


class MissingSeries(NumericalFailure):
    error_code = "MISSING_SERIES"


# ========================================
# Output family (exit 4)
# ========================================

class OutputFailure(DiffwaveError):
    error_code = "OUTPUT_FAILURE"
    exit_code = 4
