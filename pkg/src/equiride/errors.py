"""Exception hierarchy shared across the toolkit."""


class EquirideError(Exception):
    """Base class for all toolkit errors."""


class ConfigurationError(EquirideError):
    """Bad or incomplete configuration (headers, column maps, populations)."""


class DataError(EquirideError):
    """Input data cannot support the requested computation."""


class ArgumentError(EquirideError, ValueError):
    """A caller-supplied argument violates a precondition."""


class EstimationError(EquirideError):
    """A statistical fit could not be carried out or is degenerate."""


class UndefinedRatioError(EstimationError):
    """A ratio metric has a zero or empty denominator."""
