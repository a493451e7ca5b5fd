"""Exception hierarchy. Each class maps to a CLI exit status."""


class MMCertError(Exception):
    exit_code = 1


class ConfigError(MMCertError, ValueError):
    """Invalid geometry, budget or run configuration."""

    exit_code = 2


class InfeasibleBudgetError(ConfigError):
    """Budget removes more elements than a modality holds."""


class DataError(MMCertError, ValueError):
    """Malformed vote file or inconsistent vote counts."""

    exit_code = 3

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class NumericError(MMCertError, ArithmeticError):
    """A numerical routine failed to converge."""

    exit_code = 4


class EnumerationLimitError(MMCertError):
    """Instance too large for exhaustive enumeration."""

    exit_code = 4
