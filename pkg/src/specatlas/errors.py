"""Exception types shared across the package."""

from __future__ import annotations


class SpecAtlasError(Exception):
    """Base class for all specatlas errors."""


class ParseError(SpecAtlasError):
    """Raised when an input file or token cannot be parsed."""


class BuildError(SpecAtlasError):
    """Raised when a database cannot be built (duplicate keys, collisions)."""


class NotFoundError(SpecAtlasError):
    """Raised when a metadata lookup has no match.

    Carries the (spec_id, clause_id) pair so callers can decide whether to
    warn or fail.
    """

    def __init__(self, spec_id: str, clause_id: str, detail: str = ""):
        self.spec_id = spec_id
        self.clause_id = clause_id
        msg = f"no clause ({spec_id}, {clause_id})"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


class ProviderError(SpecAtlasError):
    """Raised when a remote embedding/generation backend fails.

    ``status_code`` holds the HTTP status of the last failed attempt, or
    None for transport-level failures.
    """

    def __init__(self, message: str, status_code: int | None = None):
        self.status_code = status_code
        super().__init__(message)


class PromptTooLargeError(SpecAtlasError):
    """Raised when a prompt exceeds the configured size budget.

    Prompts are never silently truncated.
    """
