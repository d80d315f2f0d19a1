class ErhoqError(Exception):
    """Base class for package errors."""


class PopulationExplosion(ErhoqError):
    """Total psip weight exceeded the configured ceiling."""


class ZeroTrace(ErhoqError):
    """The population has zero trace, so expectation values are undefined."""


class BranchMismatch(ErhoqError):
    pass


class NonDivisibleTime(ErhoqError):
    pass


class DimensionTooLarge(ErhoqError):
    pass


class DivisionByZeroAtT0(ErhoqError):
    pass


class PopulationFileError(ErhoqError):
    def __init__(self, message, line_number=None):
        self.line_number = line_number
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)


class ConfigError(ErhoqError):
    pass
