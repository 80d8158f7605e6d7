"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class EtldError(Exception):
    exit_code = 2


class UsageError(EtldError):
    exit_code = 1


class DataError(EtldError):
    """Malformed or inconsistent input data."""

    exit_code = 2


class ParseError(DataError):
    def __init__(self, message, lineno=None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


class BoundsError(DataError):
    pass


class ValidationError(DataError):
    pass


class ConfigError(UsageError):
    pass


class TrainingError(EtldError):
    exit_code = 3


class EvaluationError(DataError):
    pass
