"""Surrogate learner: saturating skill acquisition with exponential drift.

Each sample carries a skill q in [1e-6, 1].  Training moves q toward 1 by a
fraction of the remaining gap; steps that do not touch a sample decay its
skill multiplicatively.  The observed loss is -ln(q), so a fully learned
sample has zero loss.  This is deliberately the simplest model with fast
acquisition and time-dependent forgetting.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import ValidationError

Q_FLOOR = 1e-6


@dataclass
class SyntheticTask:
    task_id: str
    n_samples: int = 512
    base_difficulty: float = 0.5
    drift_rate: float = 0.004
    learn_gain: float = 0.5

    def __post_init__(self):
        if self.n_samples < 1:
            raise ValidationError("task needs at least one sample")
        if not (0.0 < self.base_difficulty < 1.0):
            raise ValidationError("base difficulty must lie in (0, 1)")
        if not (math.isfinite(self.drift_rate) and self.drift_rate >= 0):
            raise ValidationError("drift rate must be finite and >= 0")
        if not (0.0 < self.learn_gain < 1.0):
            raise ValidationError("learn gain must lie in (0, 1)")


class LearnerState:
    """Per-sample skill, gain, and exposure bookkeeping (parallel arrays)."""

    def __init__(self, initial_q: np.ndarray, gains: np.ndarray):
        q = np.asarray(initial_q, dtype=float)
        self.q = np.clip(q, Q_FLOOR, 1.0)
        self.gains = np.asarray(gains, dtype=float)
        self.exposures = np.zeros(q.size, dtype=np.int64)
        self.last_exposure_step = np.full(q.size, -1, dtype=np.int64)

    def __len__(self) -> int:
        return self.q.size


def learner_train(state: LearnerState, idx: np.ndarray, gain: float | None = None,
                  step: int | None = None) -> LearnerState:
    """Saturating improvement q <- q + g * (1 - q) for the trained samples."""
    if len(idx) == 0:
        return state
    g = state.gains[idx] if gain is None else gain
    state.q[idx] = np.clip(state.q[idx] + g * (1.0 - state.q[idx]), Q_FLOOR, 1.0)
    state.exposures[idx] += 1
    if step is not None:
        state.last_exposure_step[idx] = step
    return state


def learner_drift(state: LearnerState, idx: np.ndarray, rate: float, steps: int = 1) -> LearnerState:
    """Exponential skill decay q <- max(q * exp(-rate * steps), floor)."""
    if rate < 0:
        raise ValidationError("drift rate must be >= 0")
    if len(idx) == 0 or rate == 0.0 or steps == 0:
        return state
    state.q[idx] = np.maximum(state.q[idx] * math.exp(-rate * steps), Q_FLOOR)
    return state


def observed_loss(q) -> np.ndarray:
    """Loss signal -ln(q); strictly decreasing in skill."""
    arr = np.asarray(q, dtype=float)
    if np.any(arr < Q_FLOOR - 1e-12) or np.any(arr > 1.0):
        raise ValidationError("skill out of range")
    return -np.log(np.maximum(arr, Q_FLOOR))
