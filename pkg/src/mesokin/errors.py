"""Exception hierarchy shared by every module."""


class MesokinError(Exception):
    """Base class for all package errors."""


class ConfigError(MesokinError, ValueError):
    """Invalid configuration or specification parameter.

    ``key`` names the offending configuration entry when known.
    """

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


class InputError(MesokinError, OSError):
    """Unreadable or malformed input file."""


class DomainError(MesokinError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class MajorantViolation(MesokinError, RuntimeError):
    """A sampled relative normal speed exceeded the configured majorant."""

    def __init__(self, message, count, max_seen):
        super().__init__(message)
        self.count = count
        self.max_seen = max_seen
