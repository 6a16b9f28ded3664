"""Exception types shared across lrbridge.

The CLI maps each class to a stable exit code, see ``lrbridge.cli``.
"""


class LRBridgeError(Exception):
    """Base class for all lrbridge errors."""


class DomainError(LRBridgeError, ValueError):
    """An argument lies outside the domain where a formula is defined."""


class DegenerateInversionError(DomainError):
    """Elasticity cannot be identified from a deployment (zero error variance)."""


class EmptyInputError(LRBridgeError, ValueError):
    """An operation that needs at least one (or two) observations got none."""


class InsufficientConversionsError(LRBridgeError, RuntimeError):
    """Portfolio resampling ran out of attempts before reaching the conversion floor."""

    def __init__(self, message, best_n_converted, attempts):
        super().__init__(message)
        self.best_n_converted = best_n_converted
        self.attempts = attempts

    def __reduce__(self):
        # keeps the diagnostics intact across worker processes
        return type(self), (str(self), self.best_n_converted, self.attempts)


class InputParseError(LRBridgeError, ValueError):
    """A deployments or config file could not be parsed."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
