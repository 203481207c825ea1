"""Exception types raised across the package."""


class VegError(Exception):
    """Base class for all package errors."""


class NoObjects(VegError):
    pass


class MissingEntity(VegError):
    pass


class GraphMismatch(VegError):
    pass


class LengthMismatch(VegError):
    pass


class InvalidMeta(VegError):
    pass


class TraceParseError(VegError):
    """Malformed JSONL input; ``line`` is 1-based."""

    def __init__(self, line, message):
        super().__init__(f"line {line}: {message}")
        self.line = line


class TraceValidationError(VegError):
    """A trace violates one of its structural invariants."""

    def __init__(self, invariant, message):
        super().__init__(f"{invariant}: {message}")
        self.invariant = invariant


class DemoFailed(VegError):
    pass


class MissingHand(VegError):
    pass


class InsufficientData(VegError):
    pass


class NonPSD(VegError):
    pass


class ConfigError(VegError):
    """Bad experiment configuration; ``key`` names the offending entry."""

    def __init__(self, key, message):
        super().__init__(f"{key}: {message}")
        self.key = key
