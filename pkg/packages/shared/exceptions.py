"""
KDEXP - Shared Exception Classes
One hierarchy for every package; each class carries the CLI exit code it maps to
"""

from typing import Optional


class KdexpError(Exception):
    """Base class for all library errors"""

    exit_code: int = 1


class InvalidParameterError(KdexpError, ValueError):
    """A distribution or model parameter is outside its support"""

    exit_code = 2


class BasisError(InvalidParameterError):
    """Spline basis cannot be built for the requested points and df"""


class ConfigError(KdexpError):
    """Configuration document failed validation"""

    exit_code = 2

    def __init__(self, message: str, field: Optional[str] = None):
        self.field = field
        prefix = f"{field}: " if field else ""
        super().__init__(f"{prefix}{message}")


class NumericalError(KdexpError, ArithmeticError):
    """Linear algebra or sampling failure inside a chain"""

    exit_code = 3

    def __init__(
        self,
        message: str,
        condition: Optional[float] = None,
        sweep: Optional[int] = None,
    ):
        self.condition = condition
        self.sweep = sweep
        self.base_message = message
        super().__init__(self._format())

    def _format(self) -> str:
        parts = [self.base_message]
        if self.condition is not None:
            parts.append(f"condition={self.condition:.3e}")
        if self.sweep is not None:
            parts.append(f"sweep={self.sweep}")
        return " | ".join(parts)

    def at_sweep(self, sweep: int) -> "NumericalError":
        """Attach the sweep index the failure happened in"""
        self.sweep = sweep
        self.args = (self._format(),)
        return self


class FactorizationError(NumericalError):
    """Cholesky factorization failed (matrix not positive definite)"""


class DegenerateWeightsError(NumericalError):
    """Every log weight is -inf so no component can be selected"""

    def __init__(self, message: str, index: Optional[int] = None):
        self.index = index
        if index is not None:
            message = f"{message} (row {index})"
        super().__init__(message)


class DegenerateSampleError(KdexpError, ValueError):
    """Input samples are constant or too few for the requested estimator"""

    exit_code = 3


class SingularBandwidthError(NumericalError):
    """Bandwidth matrix is singular even after jitter"""


class ScenarioAbortedError(KdexpError):
    """Too many replicate or imputation fits failed"""

    exit_code = 3


class DataFormatError(KdexpError):
    """A data file is missing, unreadable or violates its schema"""

    exit_code = 4

    def __init__(
        self,
        message: str,
        path: Optional[str] = None,
        line: Optional[int] = None,
        field: Optional[str] = None,
    ):
        self.path = path
        self.line = line
        self.field = field
        where = []
        if path:
            where.append(str(path))
        if line is not None:
            where.append(f"line {line}")
        if field:
            where.append(f"field {field}")
        location = f" [{', '.join(where)}]" if where else ""
        super().__init__(f"{message}{location}")
