"""Typed exceptions raised across the package.

Everything derives from ValueError so casual callers can catch broadly,
while tests and the CLI can distinguish input problems (exit code 2) from
computation failures (exit code 1).
"""


class CurvecastError(ValueError):
    """Base class for all package errors."""


class ParseError(CurvecastError):
    """Malformed input file; message names the file and line number."""


class DomainError(CurvecastError):
    """Evaluation requested outside a curve's observed demand domain."""


class RankError(CurvecastError):
    """A linear system is rank deficient / ill conditioned beyond tolerance."""


class BandwidthError(CurvecastError):
    """Kernel bandwidth leaves a grid point without effective support."""


class ConvergenceError(CurvecastError):
    """An iterative fit failed to converge; message carries the best point."""


class SchemaError(CurvecastError):
    """On-disk artifact has a missing or incompatible schema version."""
