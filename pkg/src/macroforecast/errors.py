"""Exception types shared across the package."""


class MacroForecastError(Exception):
    """Base class for all package errors."""


class ParseError(MacroForecastError, ValueError):
    pass


class SchemaError(MacroForecastError, ValueError):
    pass


class ValidationError(MacroForecastError, ValueError):
    pass


class DomainError(MacroForecastError, ValueError):
    """A value lies outside the domain of a transform (e.g. log of a negative)."""


class RangeError(MacroForecastError, ValueError):
    pass


class LookupFailure(MacroForecastError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else ""


class DimensionError(MacroForecastError, ValueError):
    pass


class SingularityError(MacroForecastError, ArithmeticError):
    pass


class FactorizationError(MacroForecastError, ArithmeticError):
    pass


class DegenerateStatisticError(MacroForecastError, ArithmeticError):
    """A statistic is undefined for the supplied data (zero variance etc.)."""


class ScaleError(MacroForecastError, ValueError):
    pass


class EstimationError(MacroForecastError, RuntimeError):
    pass


class ForecastFailure(MacroForecastError, RuntimeError):
    pass


class OptimizationFailure(MacroForecastError, RuntimeError):
    pass


class ConflictError(MacroForecastError, ValueError):
    def __init__(self, message, collisions=()):
        super().__init__(message)
        self.collisions = list(collisions)


class ConfigurationError(MacroForecastError, ValueError):
    pass
