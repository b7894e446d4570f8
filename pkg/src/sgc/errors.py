"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: ParseError -> 2, ConfigError -> 3,
NumericError -> 4.
"""


class SgcError(Exception):
    """Base class for all package errors."""


class ParseError(SgcError):
    """Malformed input file (SDF, PDB, CSV, cache, checkpoint)."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ConfigError(SgcError):
    """Invalid configuration, schema mismatch, or bad arguments."""


class ShapeError(ConfigError):
    """Tensor shape mismatch; message names both shapes."""


class NumericError(SgcError):
    """Degenerate numeric situation (zero variance, divergence, ...)."""
