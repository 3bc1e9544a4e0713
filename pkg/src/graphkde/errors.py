"""Exception and warning types shared across the package."""


class GraphKdeError(Exception):
    """Base class for all package errors."""


class DimensionError(GraphKdeError):
    """Operand shapes do not conform."""


class ValidationError(GraphKdeError):
    """Invalid argument, configuration, or precondition."""


class DataFormatError(GraphKdeError):
    """Malformed input file or dataset directory."""


class NumericalError(GraphKdeError):
    """Numerical failure: non-convergence or non-finite values."""


class UndefinedMetricError(ValidationError):
    """A metric was requested on data where it is undefined."""


class GraphDataWarning(UserWarning):
    """Non-fatal data irregularity (dropped self-loop, empty file, ...)."""
