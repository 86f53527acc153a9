"""Exception hierarchy.

Every error raised on a documented failure path derives from PixcauseError,
so callers can catch one type at the CLI boundary.
"""


class PixcauseError(Exception):
    """Base class for all package errors."""


class ConfigurationError(PixcauseError):
    """Invalid option values: bad delta, unusable baseline, malformed config."""


class IngestionError(PixcauseError):
    """Unreadable or ill-formed input data (images, edge files, mappings).

    The message names the offending file and, where line-oriented, the record.
    """


class BackendError(PixcauseError):
    """A classifier backend failed: missing runtime, broken model, bad output."""


class ProtocolError(BackendError):
    """A subprocess worker violated the wire protocol."""


class InstanceTooLarge(PixcauseError):
    """Exhaustive oracle asked to enumerate more pixels than it can afford."""


class CursorExhausted(PixcauseError):
    """A context cursor was advanced past its final pixel."""


class ExplanationNotFound(PixcauseError):
    """No prefix of the ranking satisfied the stopping conditions.

    Carries the best partial witness so callers can report how close the
    search got.
    """

    def __init__(self, message, best_k=None, best_confidence=None):
        super().__init__(message)
        self.best_k = best_k
        self.best_confidence = best_confidence
