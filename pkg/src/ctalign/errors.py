"""Exception taxonomy. Each class carries a distinct CLI exit code."""


class CTAlignError(Exception):
    """Base class for every error raised by this package."""

    exit_code = 1


class ParseError(CTAlignError):
    """Malformed input file (JSON syntax, missing fields, bad counts)."""

    exit_code = 2


class ShapeError(CTAlignError):
    """Array has the wrong rank, size, or incompatible dimensions."""

    exit_code = 3


class ConfigError(CTAlignError):
    """Invalid or unknown configuration value."""

    exit_code = 4


class GridError(CTAlignError):
    """Plan column cannot be arranged or resampled as a square grid."""

    exit_code = 5


class SimplexError(CTAlignError):
    """Weight vector is not a probability simplex element."""

    exit_code = 6


class EmptyLabelSetError(CTAlignError):
    """Label vector has no positive entries where at least one is required."""

    exit_code = 7


class DegenerateVectorError(CTAlignError):
    """Zero-norm column where a direction is required."""

    exit_code = 8


class AllMaskedError(CTAlignError):
    """Every score is masked; softmax has no support."""

    exit_code = 9


class EvaluationError(CTAlignError):
    """A function produced a non-finite value during evaluation."""

    exit_code = 10


class NumericalError(CTAlignError):
    """NaN or Inf appeared where finite values are required."""

    exit_code = 11


class UndefinedMetricError(CTAlignError):
    """Metric is undefined for the given inputs (e.g. no positives)."""

    exit_code = 12
