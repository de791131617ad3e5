"""Exception hierarchy for the toolkit.

Every typed failure raised by docwarp derives from DocwarpError so callers
can catch the whole family at module boundaries (the CLI does exactly that).
"""

from __future__ import annotations


class DocwarpError(Exception):
    """Base class for all docwarp errors."""


class DegenerateGeometry(DocwarpError):
    """Collinear or otherwise degenerate input where a 2-D extent is required."""


class DegenerateW(DocwarpError):
    """Homogeneous w collapsed below tolerance during a projective divide."""


class NotARectangle(DocwarpError):
    """Four vertices that do not form a rectangle within tolerance."""


class InvalidScale(DocwarpError):
    """Non-positive scale factor in an affine parameter set."""


class SingularMatrix(DocwarpError):
    """Transform matrix is not invertible."""


class InvalidSpec(DocwarpError):
    """Deformation spec with out-of-range or unknown parameters."""


class NonConverged(DocwarpError):
    """Fixed-point field inversion did not reach tolerance.

    Carries the worst residual so the caller can decide to accept the best
    iterate anyway.
    """

    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


class UnknownLabel(DocwarpError):
    """Annotation label outside the fixed layout label scheme."""

    def __init__(self, label: str):
        super().__init__(f"unknown layout label: {label!r}")
        self.label = label


class MalformedShape(DocwarpError):
    """Annotation shape that cannot be ingested (too few points, bad type...)."""

    def __init__(self, index: int, message: str):
        super().__init__(f"shape[{index}]: {message}")
        self.index = index


class MissingField(DocwarpError):
    """Required field absent from an annotation or config document."""

    def __init__(self, name: str):
        super().__init__(f"missing required field: {name!r}")
        self.name = name


class ParseError(DocwarpError):
    """Malformed line in an OBB text file or manifest."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no
        self.message = message


class OutOfRange(DocwarpError):
    """Numeric value outside its documented range in a parsed file."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no
        self.message = message


class ConfigError(DocwarpError):
    """Augmentation config that fails schema validation."""


class ImageIoError(DocwarpError):
    """Image file could not be read or written."""


class UnsupportedFormat(DocwarpError):
    """Image file exists but is not a format this toolkit handles."""
