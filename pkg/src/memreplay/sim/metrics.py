"""Forgetting metric and per-run reporting.

Average forgetting over a T-stage run: for each task i < T, take the worst
drop between its end-of-stage-i performance and any later evaluation, then
average the per-task worst drops.  Improvements on old tasks give negative
drops; the literal value is reported alongside a clamped-at-zero variant.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from ..errors import ValidationError


def forgetting_metric(matrix: list[list[float]], n_stages: int) -> float:
    """Average worst-case degradation across tasks.

    ``matrix[t][i]`` is the performance on task i measured after stage t,
    filled for every i <= t.  Requires at least two stages and a complete
    lower triangle.
    """
    if n_stages < 2:
        raise ValidationError("forgetting requires at least two stages")
    if len(matrix) < n_stages:
        raise ValidationError("incomplete performance matrix")
    for t in range(n_stages):
        if len(matrix[t]) < t + 1:
            raise ValidationError(f"missing evaluations after stage {t}")
    total = 0.0
    for i in range(n_stages - 1):
        drops = [matrix[i][i] - matrix[t][i] for t in range(i + 1, n_stages)]
        total += max(drops)
    return total / (n_stages - 1)


@dataclass
class ForgettingReport:
    """Per-run record: matrix, forgetting values, curves, events, costs."""

    strategy: str
    seed: int
    matrix: list[list[float]]
    forgetting: float
    forgetting_clamped: float
    final_accuracy: list[float]
    accuracy_curves: dict[str, list[tuple[int, float]]]
    replay_events: list[dict]
    replay_volume: int
    event_count: int
    first_drop_step: int | None = None
    first_trigger_step: int | None = None
    extras: dict = field(default_factory=dict)
    # wall-clock only; deliberately excluded from to_dict so run outputs are
    # bit-deterministic per (scenario, strategy, seed)
    runtime_s: float = 0.0

    def to_dict(self) -> dict:
        return {
            "strategy": self.strategy,
            "seed": self.seed,
            "matrix": self.matrix,
            "forgetting": self.forgetting,
            "forgetting_clamped": self.forgetting_clamped,
            "final_accuracy": self.final_accuracy,
            "accuracy_curves": {k: [list(p) for p in v] for k, v in self.accuracy_curves.items()},
            "replay_events": self.replay_events,
            "replay_volume": self.replay_volume,
            "event_count": self.event_count,
            "first_drop_step": self.first_drop_step,
            "first_trigger_step": self.first_trigger_step,
            "extras": self.extras,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)
