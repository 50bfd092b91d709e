"""Exception types raised across the package."""


class IndexRangeError(IndexError):
    """A mode index tuple entry falls outside its dimension."""


class ShapeError(ValueError):
    """Tensor and model shapes are inconsistent."""


class DegenerateDistributionError(ValueError):
    """A sampling distribution or importance weight cannot be formed."""


class UndefinedMeasureError(ValueError):
    """A relative measure was requested against a zero reference."""


class OracleCapError(ValueError):
    """An explicit construction would exceed the oracle row cap."""


class FormatError(ValueError):
    """A tensor or model file is malformed."""
