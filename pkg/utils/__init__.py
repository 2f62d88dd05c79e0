"""
Utils package: errors, config loading, logging setup, file helpers.
"""
from .errors import (
    BehindCamera,
    ConfigError,
    DegenerateConfiguration,
    DegenerateDepth,
    GeometryError,
    IndexOutOfRange,
    LengthMismatch,
    MissingCalib,
    NonConvergence,
    ParseError,
    ShapeMismatch,
    ValidationError,
    Vehicle3DError,
)
from .utils import dump_json, ensure_dir, read_json, read_jsonl, write_json, write_jsonl

__all__ = [
    'BehindCamera', 'ConfigError', 'DegenerateConfiguration', 'DegenerateDepth',
    'GeometryError', 'IndexOutOfRange', 'LengthMismatch', 'MissingCalib',
    'NonConvergence', 'ParseError', 'ShapeMismatch', 'ValidationError',
    'Vehicle3DError', 'dump_json', 'ensure_dir', 'read_json', 'read_jsonl',
    'write_json', 'write_jsonl',
]
