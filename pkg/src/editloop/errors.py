"""Exception hierarchy shared across the package."""

from __future__ import annotations


class EditLoopError(Exception):
    """Base class for all package errors."""


class InvariantViolation(EditLoopError):
    """An entity failed its type invariants; carries one message per rule."""

    def __init__(self, violations: list[str]):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class NotFoundError(EditLoopError):
    pass


class DuplicateIdError(EditLoopError):
    pass


class ConflictError(EditLoopError):
    """Optimistic concurrency failure: the caller's original_value is stale."""


class ArtifactDeletedError(EditLoopError):
    """Writes against a soft-deleted artifact are rejected."""


class LedgerCorruptionError(EditLoopError):
    """Replaying the edit history contradicts a recorded original_value."""


class GatewayError(EditLoopError):
    retryable = False


class GatewayRetryableError(GatewayError):
    """Timeout or transport failure; safe to retry."""

    retryable = True


class GatewayRejectionError(GatewayError):
    """Provider rejected the request (4xx); retrying will not help."""


class MockScriptExhaustedError(GatewayError):
    """Ordered mock queue ran dry and no fallback was configured."""


class ParseError(EditLoopError):
    """Completion text could not be parsed into the expected structure."""


class ContractViolationError(EditLoopError):
    """Completion parsed but breaks a count contract (e.g. wrong entry count)."""


class TaskValidationError(EditLoopError):
    def __init__(self, message: str, field: str | None = None):
        self.field = field
        super().__init__(message)


class TraceFormatError(EditLoopError):
    """A replay trace event is malformed; names the offending line index."""

    def __init__(self, index: int, message: str):
        self.index = index
        super().__init__(f"event {index}: {message}")


class ScriptExhaustionError(EditLoopError):
    """A simulation script did not cover a required generation or extraction."""


class SlopeUndefinedError(EditLoopError):
    """Least-squares slope is undefined when all x values coincide."""


class ContainmentViolation(EditLoopError):
    """A generation prompt is missing previously accumulated knowledge."""
