"""Exception types shared across the package.

The CLI maps these onto exit codes: configuration and parse problems are
exit 2, numerical domain problems are exit 3.
"""

from __future__ import annotations


class TangentLabError(Exception):
    """Base class for all package-specific errors."""


class ParseError(TangentLabError):
    """Raised for malformed expression text. Carries a 1-based position."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at position {position})")
        self.position = position


class UnboundVariableError(TangentLabError):
    """Raised when evaluation is missing a binding for a free variable."""


class DomainError(TangentLabError):
    """Raised when evaluation leaves the numeric domain.

    Division by zero, logarithms of non-positive values, overflow, and
    non-finite samples inside quadrature or grid evaluation all raise this
    type with a message naming the offending operation and location.
    """


class ConfigError(TangentLabError):
    """Raised by the CLI for invalid or inconsistent run configuration."""
