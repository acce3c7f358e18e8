"""Exception hierarchy shared across the package."""


class DmbppError(Exception):
    """Base class for all package-specific errors."""


class DimensionMismatch(DmbppError):
    pass


class OutOfRange(DmbppError):
    pass


class SimplexViolation(DmbppError):
    pass


class InvalidArgument(DmbppError):
    pass


class SizeLimit(DmbppError):
    pass


class NormalizationError(DmbppError):
    pass


class ZeroMarginal(DmbppError):
    pass


class OutOfSupport(DmbppError):
    pass


class Infeasible(DmbppError):
    pass


class DegenerateLikelihood(DmbppError):
    pass


class UnsupportedSubset(DmbppError):
    pass


class BudgetTooSmall(DmbppError):
    pass


class EmptyInput(DmbppError):
    pass


class ConfigError(DmbppError):
    pass


class ParseError(DmbppError):
    pass


class RescaleOutOfRange(DmbppError):
    pass


class EmptyDataset(DmbppError):
    pass
