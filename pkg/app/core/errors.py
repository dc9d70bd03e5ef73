"""Engine error types"""
from typing import Any, Dict, Optional


class SplineCLError(Exception):
    """Root of every error raised by the engine"""

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.message = message
        self.details = details or {}

    def to_dict(self) -> Dict[str, Any]:
        return {"error": type(self).__name__, "message": self.message, "details": self.details}


class DimensionError(SplineCLError):
    """Shape mismatch or empty operand"""


class ConfigError(SplineCLError):
    """Invalid configuration value, key or combination"""


class ContractViolation(SplineCLError):
    """A caller broke an operation's precondition (stale cache, path mismatch, range check)"""


class EvaluationError(SplineCLError):
    """Objective could not be evaluated to a finite value"""


class NonFiniteError(SplineCLError):
    """NaN/Inf loss or gradient during training"""


class ParseError(SplineCLError):
    """Malformed dataset file"""


class DataMissingError(SplineCLError):
    """Dataset files are not present under the data root"""


class MetricError(SplineCLError):
    """Result matrix is incomplete for the requested metric"""


class ProbeError(SplineCLError):
    """Degenerate NTK probe input"""


class IndexOutOfRange(SplineCLError):
    """Index outside the valid range"""


class BufferEmptyError(SplineCLError):
    """Sampling from an empty replay buffer"""
