"""Exception hierarchy shared across the package."""


class MccPlanError(Exception):
    """Base class for all package errors."""


class CovariateLayoutError(MccPlanError):
    """Covariate vector does not match the model's covariate dictionary."""


class NumericOverflowError(MccPlanError):
    """A linear predictor left the safe range; the fit is pathological."""


class CapacityError(MccPlanError):
    """Joint state space too large to materialize."""


class DataError(MccPlanError):
    """Dataset violates a structural invariant."""


class ValidationError(MccPlanError):
    """Input value outside its admissible range."""

    def __init__(self, message: str, fields: list[str] | None = None):
        super().__init__(message)
        self.fields = fields or []


class SchemaError(MccPlanError):
    """Malformed persisted file."""

    def __init__(self, message: str, line: int | None = None, field: str | None = None):
        super().__init__(message)
        self.line = line
        self.field = field


class BoundsError(MccPlanError):
    """Behavior bounds are infeasible."""

    def __init__(self, message: str, offending: list[str] | None = None):
        super().__init__(message)
        self.offending = offending or []


class StepSizeError(MccPlanError):
    """Gradient updates diverged; a smaller learning rate is needed."""
