"""Exception hierarchy shared by the pipeline stages.

The CLI maps :class:`ValidationError` to exit status 1 and
:class:`NumericalError` to exit status 2.
"""


class GawbsError(Exception):
    """Base class for all package errors."""


class ValidationError(GawbsError, ValueError):
    """Invalid user input: bad dimensions, unknown config keys, bad files."""

    def __init__(self, message, field=None):
        self.field = field
        if field is not None and field not in message:
            message = f"{field}: {message}"
        super().__init__(message)


class GeometryError(ValidationError):
    """A cross-section cannot be constructed (colliding holes, core overlap)."""


class MeshError(GawbsError):
    """Meshing failed or a mesh file is malformed."""


class MeshParseError(MeshError, ValidationError):
    """Malformed mesh file; carries the offending line number."""

    def __init__(self, message, line=None):
        self.line = line
        self.field = None
        if line is not None:
            message = f"line {line}: {message}"
        GawbsError.__init__(self, message)


class NumericalError(GawbsError, RuntimeError):
    """Numerical failure: factorization breakdown, missed eigenvalues, etc."""


class CalibrationError(ValidationError):
    """Measured traces cannot be reduced to shot-noise-referenced ratios."""
