"""Exception hierarchy shared across the pipeline.

Every error carries a short machine-readable ``code`` (its class name) so the
HTTP service and CLI can map failures without string matching.
"""


class SwarmchorError(Exception):
    """Base class for all pipeline errors."""

    @property
    def code(self) -> str:
        return type(self).__name__


# --- audio / beats ---
class EmptyAudio(SwarmchorError):
    pass


class InsufficientAudio(SwarmchorError):
    pass


class ParseError(SwarmchorError):
    pass


class NonMonotonicBeats(SwarmchorError):
    pass


# --- choreography generation ---
class TooManyBeats(SwarmchorError):
    pass


class EmptyReprompt(SwarmchorError):
    pass


class BackendUnavailable(SwarmchorError):
    pass


class BackendRefused(SwarmchorError):
    pass


class MalformedResponse(SwarmchorError):
    pass


class MissingBeats(SwarmchorError):
    pass


class DroneCountMismatch(SwarmchorError):
    pass


# --- preprocessing ---
class SeparationFailed(SwarmchorError):
    pass


# --- safety filter ---
class InfeasibleWindow(SwarmchorError):
    def __init__(self, msg: str, violations: dict | None = None):
        super().__init__(msg)
        self.violations = violations or {}


class FilteringFailed(SwarmchorError):
    def __init__(self, msg: str, window_index: int = -1):
        super().__init__(msg)
        self.window_index = window_index


# --- simulation / analytics ---
class LengthMismatch(SwarmchorError):
    pass


class InconsistentInputs(SwarmchorError):
    pass


class EmptyBatch(SwarmchorError):
    pass


# --- sessions / service ---
class UnknownSong(SwarmchorError):
    pass


class TooManyDrones(SwarmchorError):
    pass


class SessionNotFound(SwarmchorError):
    pass


class StageOrderViolation(SwarmchorError):
    pass


class SessionBusy(SwarmchorError):
    pass
