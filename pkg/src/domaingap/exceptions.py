"""Exception hierarchy shared by every module of the package."""


class DomainGapError(Exception):
    """Base class for all errors raised by domaingap."""


class ShapeError(DomainGapError, ValueError):
    """Array extents do not agree with what an operation requires."""


class NumericError(DomainGapError, ArithmeticError):
    """Non-finite values were encountered where finite ones are required."""


class ClassRangeError(DomainGapError, ValueError):
    """A label value lies outside ``0..n_classes-1``."""


class ClassAbsentError(DomainGapError, ValueError):
    """A requested class has no qualifying pixels (or pixel pairs)."""


class BoundsError(DomainGapError, IndexError):
    """A crop rectangle does not fit inside the image."""


class ImageFormatError(DomainGapError, ValueError):
    """An image file could not be parsed or has the wrong layout."""


class ZeroVarianceError(DomainGapError, ValueError):
    """Correlation requested for a constant vector."""


class ConfigError(DomainGapError, ValueError):
    """Invalid or inconsistent configuration."""


class DatasetError(DomainGapError, OSError):
    """A dataset directory is missing, incomplete or malformed."""


class TrainingError(DomainGapError, RuntimeError):
    """Training diverged (non-finite loss)."""
