"""Exception types shared across the package."""

from __future__ import annotations


class RavuError(Exception):
    """Base class for all package errors."""


class ParseError(RavuError):
    """A document or DSL text could not be parsed.

    Carries an optional line number (1-based) and the offending field name
    so callers can produce precise diagnostics.
    """

    def __init__(self, message: str, line: int | None = None, field: str | None = None):
        self.line = line
        self.field = field
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class NotFound(RavuError):
    """A requested entity or node does not exist in the graph."""


class EmptyIndex(RavuError):
    """A retrieval operation was issued against an index with no vectors."""


class BackendError(RavuError):
    """Base class for model-backend failures."""


class Timeout(BackendError):
    """The remote backend did not respond within the configured deadline."""


class BlockedContent(BackendError):
    """The provider refused to process the request (safety filter)."""


class MalformedResponse(BackendError):
    """The backend reply failed caller-side validation after all retries."""
