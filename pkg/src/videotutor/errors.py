"""Exception types shared across the engine."""


class VideotutorError(Exception):
    """Base class for all engine errors."""


class ValidationError(VideotutorError):
    """Malformed input data (transcript entry, config field, code artifact)."""


class ConfigError(ValidationError):
    """Expert configuration violates the config schema or its invariants."""


class SourceError(VideotutorError):
    """A transcript/code/config source could not be resolved or fetched."""


class GatewayError(VideotutorError):
    """Text-generation or embedding backend failure."""


class MockScriptError(GatewayError):
    """Mock script exhausted or the next entry does not match the request."""


class ReplyParseError(VideotutorError):
    """A gateway reply did not parse as the expected format.

    Carries the raw reply so callers can log or surface it.
    """

    def __init__(self, message: str, raw_reply: str):
        super().__init__(message)
        self.raw_reply = raw_reply


class UnresolvedAnchorError(VideotutorError):
    """No transcript sentence matched a segment summary above the similarity floor."""


class TemplateRejection(VideotutorError):
    """Knowledge text matched no sentence template; includes a nearest-template hint."""

    def __init__(self, message: str, nearest: str | None = None):
        super().__init__(message)
        self.nearest = nearest


class CoverageError(ConfigError):
    """The action set has no template for a (move, domain) pair the planner emitted."""


class PhaseError(VideotutorError):
    """An inbound event is not valid for the session's current phase."""


class DegenerateUpdateError(VideotutorError):
    """Mastery update denominator collapsed to zero (invariant-violating parameters)."""


class StoreError(VideotutorError):
    """Student-model persistence failure."""


class SessionError(VideotutorError):
    """Unrecoverable problem inside a live session (e.g. unresolvable parameter)."""
