"""Thin synchronous client for the replay engine coprocess.

Spawns the engine binary, speaks its newline-delimited JSON protocol over
stdin/stdout, and exposes the register / report / tick / mark lifecycle as
plain calls plus a mixed-batch helper for training loops.
"""

from .client import (
    ClientError,
    EngineCrashError,
    EngineHandle,
    MixedBatchPlan,
    RemoteEngineError,
    RequestTimeout,
    SpawnError,
    connect,
)

__version__ = "0.1.0"

__all__ = [
    "ClientError",
    "EngineCrashError",
    "EngineHandle",
    "MixedBatchPlan",
    "RemoteEngineError",
    "RequestTimeout",
    "SpawnError",
    "connect",
]
