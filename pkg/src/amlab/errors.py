"""Exception hierarchy shared by every module; the CLI maps these to exit codes."""

from __future__ import annotations


class AmlabError(Exception):
    """Base class for all package errors."""


class InputError(AmlabError, ValueError):
    """Malformed or non-finite input to an operation."""


class DomainError(AmlabError, ValueError):
    """Query outside the domain on which an object is defined."""


class ConfigError(AmlabError, ValueError):
    """Invalid configuration or parameter outside its admissible range."""


class NumericalError(AmlabError, RuntimeError):
    """An iterative procedure failed to converge.

    ``history`` carries whatever per-iteration log the failing routine kept
    (residuals, step sizes), so callers can report it.
    """

    def __init__(self, message: str, history=None):
        super().__init__(message)
        self.history = list(history) if history is not None else []
