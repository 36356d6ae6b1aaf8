"""Exception types shared across the package."""


class ParameterError(ValueError):
    """A model or network parameter violates its documented bounds."""


class ConfigError(ValueError):
    """A run configuration file is malformed or contains illegal values."""


class DataFormatError(ValueError):
    """An input data file does not match its expected schema.

    Carries enough context (line number, offending value) to locate the
    problem without reopening the file.
    """

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
