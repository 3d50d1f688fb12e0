"""Exception types shared across the package.

Every error raised intentionally by this package derives from LiouvilleError,
so callers (in particular the CLI) can map failures to exit codes without
pattern matching on messages.
"""

from __future__ import annotations


class LiouvilleError(Exception):
    """Base class for all package errors."""


class DomainError(LiouvilleError, ValueError):
    """Input outside the mathematical domain of an operation."""


class AccuracyError(LiouvilleError):
    """A numerical routine could not certify its target tolerance."""


class ResourceError(LiouvilleError):
    """A configured resource limit (recursion depth, cutoff) was exceeded."""


class DegeneracyError(LiouvilleError):
    """A Gram matrix is numerically singular at or near a degenerate weight."""

    def __init__(self, message: str, level: int | None = None,
                 kac_rs: tuple[int, int] | None = None):
        super().__init__(message)
        self.level = level
        self.kac_rs = kac_rs


class ConfigError(LiouvilleError, ValueError):
    """Malformed experiment configuration (unknown keys, bad types, bad values)."""
