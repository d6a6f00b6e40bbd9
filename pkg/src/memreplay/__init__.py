"""Memory-aware replay scheduling engine.

Tracks per-sample retention through hazard-based decay, decides when to
replay, how much, and which samples, and ships a synthetic continual-
learning simulator for desk-scale verification.
"""

from .config import BufferParams, EngineConfig, config_from_dict, load_config
from .engine import Engine, canonical_json
from .errors import (
    ConfigError,
    DuplicateSampleError,
    EngineError,
    ProtocolError,
    SnapshotError,
    UnknownSampleError,
    ValidationError,
)
from .memory import (
    LossNormalizer,
    MemoryParams,
    PhiConfig,
    SampleState,
    consolidate,
    epoch_update,
    hazard,
    normalize_loss,
    phi,
    retention_at,
    riemann_gap,
    step_decay,
    time_to_threshold,
    update_ema_loss,
)
from .sampler import (
    ReplayBuffer,
    ReplayDecision,
    SamplerParams,
    buffer_update,
    build_decision,
    sample_without_replacement,
    weights_gap_aware,
    weights_power_law,
)
from .scheduler import (
    MeanFieldStats,
    ScheduleState,
    SchedulerParams,
    mean_field_stats,
    next_interval,
    optimal_ratio,
    replay_ratio,
    should_replay,
    threshold_interval,
)

__version__ = "0.1.0"

__all__ = [
    "BufferParams",
    "ConfigError",
    "DuplicateSampleError",
    "Engine",
    "EngineConfig",
    "EngineError",
    "LossNormalizer",
    "MeanFieldStats",
    "MemoryParams",
    "PhiConfig",
    "ProtocolError",
    "ReplayBuffer",
    "ReplayDecision",
    "SampleState",
    "SamplerParams",
    "ScheduleState",
    "SchedulerParams",
    "SnapshotError",
    "UnknownSampleError",
    "ValidationError",
    "buffer_update",
    "build_decision",
    "canonical_json",
    "config_from_dict",
    "consolidate",
    "epoch_update",
    "hazard",
    "load_config",
    "mean_field_stats",
    "next_interval",
    "normalize_loss",
    "optimal_ratio",
    "phi",
    "replay_ratio",
    "retention_at",
    "riemann_gap",
    "sample_without_replacement",
    "should_replay",
    "step_decay",
    "threshold_interval",
    "time_to_threshold",
    "update_ema_loss",
    "weights_gap_aware",
    "weights_power_law",
]
