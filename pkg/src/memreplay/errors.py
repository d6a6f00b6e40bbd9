"""Exception hierarchy shared by the engine modules.

Every error carries a short machine-readable ``code`` so the wire protocol
can surface failures without string matching.
"""

from __future__ import annotations


class EngineError(Exception):
    """Base class for all engine errors."""

    default_code = "engine_error"

    def __init__(self, msg: str, code: str | None = None):
        super().__init__(msg)
        self.code = code or self.default_code


class ValidationError(EngineError):
    """An argument or state update violated a declared range or invariant."""

    default_code = "invalid_value"


class ConfigError(EngineError):
    """Configuration document rejected (unknown key, bad type, bad range)."""

    default_code = "bad_config"


class UnknownSampleError(EngineError):
    default_code = "unknown_id"


class DuplicateSampleError(EngineError):
    default_code = "duplicate_id"


class SnapshotError(EngineError):
    default_code = "snapshot_error"


class ProtocolError(EngineError):
    default_code = "bad_request"
