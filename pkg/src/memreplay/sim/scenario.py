"""Scenario configuration for the simulator.

The default desk-scale scenario is 3 tasks x 512 samples, 600 steps per
stage, batch 32, sized so a full strategy comparison stays under a minute.
Interference is strongest right after a task switch and anneals toward a
residual floor within the stage; trigger baselines share a per-stage replay
budget so strategies are compared at equal rehearsal cost.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field, fields

import yaml

from ..errors import ConfigError, ValidationError
from .learner import SyntheticTask


@dataclass
class ScenarioConfig:
    tasks: list[SyntheticTask] = field(default_factory=list)
    steps_per_stage: int = 600
    batch_size: int = 32
    # drift anneal: rate(t) = drift * (floor + (1 - floor) * exp(-kappa * t / T))
    drift_anneal_floor: float = 0.25
    drift_anneal_kappa: float = 6.0
    loss_noise_std: float = 0.05
    baseline_budget_per_stage: int | None = 512
    baseline_event_count: int = 16
    curve_stride: int = 10
    engine_overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.tasks:
            self.tasks = default_tasks()
        if self.steps_per_stage < 1:
            raise ValidationError("steps_per_stage must be >= 1")
        if self.batch_size < 1:
            raise ValidationError("batch_size must be >= 1")
        if not (0.0 <= self.drift_anneal_floor <= 1.0):
            raise ValidationError("drift_anneal_floor must lie in [0, 1]")
        if self.drift_anneal_kappa < 0:
            raise ValidationError("drift_anneal_kappa must be >= 0")
        if self.loss_noise_std < 0:
            raise ValidationError("loss_noise_std must be >= 0")
        if self.baseline_budget_per_stage is not None and self.baseline_budget_per_stage < 0:
            raise ValidationError("baseline budget must be >= 0 or null")
        if self.baseline_event_count < 1:
            raise ValidationError("baseline_event_count must be >= 1")

    @property
    def n_stages(self) -> int:
        return len(self.tasks)

    def drift_rate_at(self, task: SyntheticTask, step_in_stage: int) -> float:
        frac = step_in_stage / self.steps_per_stage
        anneal = self.drift_anneal_floor + (1.0 - self.drift_anneal_floor) * math.exp(
            -self.drift_anneal_kappa * frac
        )
        return task.drift_rate * anneal


def default_tasks(n_tasks: int = 3, n_samples: int = 512) -> list[SyntheticTask]:
    return [
        SyntheticTask(
            task_id=f"task{i}",
            n_samples=n_samples,
            base_difficulty=0.5,
            drift_rate=0.004,
            learn_gain=0.5,
        )
        for i in range(n_tasks)
    ]


def default_scenario() -> ScenarioConfig:
    return ScenarioConfig()


_TASK_KEYS = {f.name for f in fields(SyntheticTask)}
_SCENARIO_KEYS = {f.name for f in fields(ScenarioConfig)}


def scenario_from_dict(doc: dict | None) -> ScenarioConfig:
    doc = dict(doc or {})
    unknown = set(doc) - _SCENARIO_KEYS
    if unknown:
        raise ConfigError(
            f"unknown scenario key(s): {', '.join(sorted(unknown))}", code="unknown_key"
        )
    tasks_doc = doc.pop("tasks", None)
    tasks = []
    if tasks_doc:
        for i, td in enumerate(tasks_doc):
            if not isinstance(td, dict):
                raise ConfigError("each task must be a mapping", code="bad_value")
            unknown = set(td) - _TASK_KEYS
            if unknown:
                raise ConfigError(
                    f"unknown task key(s): {', '.join(sorted(unknown))}", code="unknown_key"
                )
            td.setdefault("task_id", f"task{i}")
            try:
                tasks.append(SyntheticTask(**td))
            except ValidationError as exc:
                raise ConfigError(f"[tasks[{i}]] {exc}", code="out_of_range") from exc
    try:
        return ScenarioConfig(tasks=tasks, **doc)
    except ValidationError as exc:
        raise ConfigError(str(exc), code="out_of_range") from exc
    except TypeError as exc:
        raise ConfigError(str(exc), code="bad_value") from exc


def load_scenario(path_or_text: str) -> ScenarioConfig:
    if os.path.exists(path_or_text):
        with open(path_or_text, "r", encoding="utf-8") as fh:
            text = fh.read()
    else:
        text = path_or_text
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed scenario document: {exc}", code="malformed") from exc
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise ConfigError("scenario document must be a mapping", code="malformed")
    return scenario_from_dict(doc)
