"""
Exception types shared by every package of the toolkit.
"""
from typing import Optional


class Vehicle3DError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(Vehicle3DError, ValueError):
    """Input breaks a documented invariant."""

    def __init__(self, message: str, model_id: Optional[str] = None, field: Optional[str] = None):
        self.model_id = model_id
        self.field = field
        prefix = ""
        if model_id is not None:
            prefix += f"[model {model_id}] "
        if field is not None:
            prefix += f"{field}: "
        super().__init__(prefix + message)


class ConfigError(ValidationError):
    """Config file or flag override is malformed."""


class ShapeMismatch(ValidationError):
    """Arrays that must agree in length or shape do not."""


class LengthMismatch(ValidationError):
    """A per-model or per-part vector has the wrong length."""


class IndexOutOfRange(ValidationError, IndexError):
    """Class index outside the logits range."""


class ParseError(ValidationError):
    """Malformed file content."""

    def __init__(self, message: str, line: Optional[int] = None, path: Optional[str] = None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f":{line}" if where else f"line {line}"
        super().__init__(f"{where}: {message}" if where else message)


class MissingCalib(ParseError):
    """Calibration text has no usable P2 row."""


class GeometryError(Vehicle3DError, ArithmeticError):
    """Numerical geometry failure."""


class DegenerateDepth(GeometryError):
    """A point sits at or behind the camera plane."""

    def __init__(self, message: str, index: Optional[int] = None):
        self.index = index
        if index is not None:
            message = f"part {index}: {message}"
        super().__init__(message)


class DegenerateConfiguration(GeometryError):
    """Correspondences do not determine a pose."""


class BehindCamera(GeometryError):
    """Best pose candidate places points behind the camera."""


class NonConvergence(Vehicle3DError, RuntimeError):
    """Iterative solver hit its iteration cap; `solution` holds the last iterate."""

    def __init__(self, message: str, solution=None):
        self.solution = solution
        super().__init__(message)
