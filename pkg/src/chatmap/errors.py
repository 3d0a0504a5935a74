"""Exception types shared across the package.

Every error raised on a documented contract path derives from ChatmapError so
callers can catch the family; parse/validation errors additionally derive from
ValueError, lookup failures from KeyError.
"""

from __future__ import annotations


class ChatmapError(Exception):
    """Base class for all package errors."""


class MalformedLine(ChatmapError, ValueError):
    """Input line is not a single JSON object."""


class MissingField(ChatmapError, ValueError):
    """A required record field is absent after adapter mapping."""

    def __init__(self, field: str, message: str | None = None):
        super().__init__(message or f"missing required field: {field}")
        self.field = field


class InvariantViolation(ChatmapError, ValueError):
    """A record or structure violates a documented invariant."""


class InvalidArg(ChatmapError, ValueError):
    """An operation argument is outside its documented domain."""


class DuplicateId(ChatmapError, ValueError):
    """Two records share a (dataset, conversation_id) pair."""


class PageOutOfRange(ChatmapError, ValueError):
    """Requested page lies beyond the last non-empty result page."""


class NotFound(ChatmapError, KeyError):
    """Lookup of a conversation or resource failed."""


class NoUserTurn(ChatmapError, ValueError):
    """Record has no user turn to embed."""


class ExternalUnavailable(ChatmapError, RuntimeError):
    """The external embedding endpoint failed after the configured retries."""


class DegenerateInput(ChatmapError, ValueError):
    """Input too degenerate for the requested computation."""


class TooManyPoints(ChatmapError, ValueError):
    """Point count exceeds the exact k-NN limit; subsample first."""


class NonFinite(ChatmapError, ArithmeticError):
    """A computation produced NaN or infinity."""


class DimensionMismatch(ChatmapError, ValueError):
    """Vector dimension differs from the model's input dimension."""


class LanguageMismatch(ChatmapError, ValueError):
    """A projector was applied to a record of another language."""


class MissingCoordinate(ChatmapError, ValueError):
    """A display-subset id has no computed coordinate."""


class CacheUnavailable(ChatmapError, RuntimeError):
    """The coordinate cache backend failed; callers degrade to compute-only."""


class BadParam(ChatmapError, ValueError):
    """An HTTP query parameter failed to parse or is out of bounds."""

    def __init__(self, param: str, message: str | None = None):
        super().__init__(message or f"bad query parameter: {param}")
        self.param = param


class FormatError(ChatmapError, ValueError):
    """A persisted binary artifact is corrupt or has the wrong magic/version."""
