"""Replay triggering strategies for the simulator.

Baselines mirror the standard families: no replay, interval-driven replay
(fixed, geometric, and expanding spaced sequences), loss-threshold
triggering, and accuracy-drop triggering.  The ``mssr_*`` strategies drive
the actual engine: ``mssr_sch`` uses expanding-interval scheduling with
uniform selection, ``mssr_spl`` uses fixed-interval scheduling with
retention-prioritized selection, and ``mssr_full`` combines both.

Trigger baselines draw uniformly from the prior-task pool and share a
per-stage replay budget so interval patterns are compared at equal
rehearsal cost; the engine variants are self-scheduled and uncapped, with
their replay volume reported as the cost measure.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..config import config_from_dict
from ..engine import Engine
from ..errors import ValidationError
from ..scheduler import ScheduleState, SchedulerParams, should_replay

STRATEGY_KINDS = (
    "none",
    "fixed",
    "loss_trigger",
    "accuracy_trigger",
    "geometric",
    "ebbinghaus_sequence",
    "mssr_sch",
    "mssr_spl",
    "mssr_full",
)

GEOMETRIC_SEQUENCE = [1, 3, 7, 15, 30]
EBBINGHAUS_SEQUENCE = [1, 2, 4, 7, 15]


@dataclass
class StrategyConfig:
    """One strategy selection plus its per-kind parameters."""

    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in STRATEGY_KINDS:
            raise ValidationError(f"unknown strategy kind {self.kind!r}")

    def build(self, scenario) -> "ReplayStrategy":
        p = dict(self.params)
        if self.kind == "none":
            return NoReplayStrategy()
        if self.kind == "fixed":
            return IntervalStrategy("fixed", scenario, interval=p.pop("interval", 3), **p)
        if self.kind == "geometric":
            seq = p.pop("sequence", GEOMETRIC_SEQUENCE)
            return IntervalStrategy("geometric", scenario, sequence=seq, **p)
        if self.kind == "ebbinghaus_sequence":
            seq = p.pop("sequence", EBBINGHAUS_SEQUENCE)
            return IntervalStrategy("ebbinghaus_sequence", scenario, sequence=seq, **p)
        if self.kind == "loss_trigger":
            return LossTriggerStrategy(scenario, **p)
        if self.kind == "accuracy_trigger":
            return AccuracyTriggerStrategy(scenario, **p)
        return EngineStrategy(self.kind, scenario, **p)


class StepContext:
    """What a strategy may see at one step (filled by the runner)."""

    def __init__(self, stage: int, local_step: int, global_step: int,
                 batch_idx: np.ndarray, batch_losses: np.ndarray,
                 prior_idx: np.ndarray,
                 observe_losses: Callable[[np.ndarray], np.ndarray],
                 task_accuracy: Callable[[int], float]):
        self.stage = stage
        self.local_step = local_step
        self.global_step = global_step
        self.batch_idx = batch_idx
        self.batch_losses = batch_losses
        self.prior_idx = prior_idx
        self.observe_losses = observe_losses
        self.task_accuracy = task_accuracy


class ReplayStrategy:
    name = "base"

    def begin_run(self, scenario, sample_ids: list[str], task_of: np.ndarray,
                  rng: np.random.Generator) -> None:
        self.scenario = scenario
        self.sample_ids = sample_ids
        self.task_of = task_of
        self.rng = rng
        self.first_trigger_step: int | None = None

    def begin_stage(self, stage: int, prior_idx: np.ndarray, current_idx: np.ndarray) -> None:
        pass

    def replay_for_step(self, ctx: StepContext) -> np.ndarray:
        return np.empty(0, dtype=np.int64)

    def note_replayed(self, ctx: StepContext, idx: np.ndarray) -> None:
        if self.first_trigger_step is None and len(idx):
            self.first_trigger_step = ctx.global_step

    def finish_run(self) -> dict:
        return {}


class NoReplayStrategy(ReplayStrategy):
    name = "none"


class _BudgetedBaseline(ReplayStrategy):
    """Shared machinery: uniform selection under a per-stage budget."""

    def __init__(self, scenario, per_event_count: int | None = None,
                 budget_per_stage: int | None = "scenario"):
        self.per_event_count = (
            scenario.baseline_event_count if per_event_count is None else per_event_count
        )
        self.budget_per_stage = (
            scenario.baseline_budget_per_stage if budget_per_stage == "scenario" else budget_per_stage
        )

    def begin_stage(self, stage, prior_idx, current_idx):
        self.prior_idx = prior_idx
        self.budget_left = self.budget_per_stage  # None means unlimited

    def _draw(self, n: int | None) -> np.ndarray:
        if len(self.prior_idx) == 0:
            return np.empty(0, dtype=np.int64)
        if n is None:
            picked = self.prior_idx
        else:
            if self.budget_left is not None:
                n = min(n, self.budget_left)
            n = min(n, len(self.prior_idx))
            if n <= 0:
                return np.empty(0, dtype=np.int64)
            picked = self.rng.choice(self.prior_idx, size=n, replace=False)
        if self.budget_left is not None:
            if self.budget_left < len(picked):
                picked = picked[: self.budget_left]
            self.budget_left -= len(picked)
        return np.asarray(picked, dtype=np.int64)


class IntervalStrategy(_BudgetedBaseline):
    """Replay on a time pattern: a fixed interval or an explicit sequence.

    Explicit sequences repeat their final interval once exhausted, so the
    pattern covers arbitrarily long stages.  ``per_event_count=None``
    replays the entire prior pool at each event (the upper-bound sanity
    configuration).
    """

    def __init__(self, name, scenario, interval: float | None = None,
                 sequence: list[float] | None = None,
                 per_event_count: int | None = None,
                 budget_per_stage="scenario", replay_all: bool = False):
        super().__init__(scenario, per_event_count, budget_per_stage)
        self.name = name
        self.replay_all = replay_all
        if sequence is not None:
            self.scheduler_params = SchedulerParams(
                mode="explicit_sequence", explicit_intervals=[float(v) for v in sequence]
            )
        else:
            self.scheduler_params = SchedulerParams(
                mode="fixed", initial_interval=float(interval)
            )

    def begin_stage(self, stage, prior_idx, current_idx):
        super().begin_stage(stage, prior_idx, current_idx)
        self.schedule = ScheduleState.initial(self.scheduler_params)

    def replay_for_step(self, ctx):
        fired, _ = should_replay(ctx.local_step, self.schedule, self.scheduler_params)
        if not fired:
            return np.empty(0, dtype=np.int64)
        return self._draw(None if self.replay_all else self.per_event_count)


class LossTriggerStrategy(_BudgetedBaseline):
    """Fire when the probed mean loss on prior samples exceeds a threshold.

    Probes ``probe_size`` random prior samples through the noisy loss
    channel each step; noise spikes cause spurious triggers, which is the
    documented weakness of loss-based scheduling.
    """

    name = "loss_trigger"

    def __init__(self, scenario, threshold: float = 0.35, probe_size: int = 8,
                 cooldown: int = 10, per_event_count: int | None = None,
                 budget_per_stage="scenario"):
        super().__init__(scenario, per_event_count, budget_per_stage)
        self.threshold = threshold
        self.probe_size = probe_size
        self.cooldown = cooldown
        self._cool = 0

    def begin_stage(self, stage, prior_idx, current_idx):
        super().begin_stage(stage, prior_idx, current_idx)
        self._cool = 0

    def replay_for_step(self, ctx):
        if len(self.prior_idx) == 0:
            return np.empty(0, dtype=np.int64)
        if self._cool > 0:
            self._cool -= 1
            return np.empty(0, dtype=np.int64)
        probe = self.rng.choice(self.prior_idx, size=min(self.probe_size, len(self.prior_idx)),
                                replace=False)
        mean_loss = float(ctx.observe_losses(probe).mean())
        if mean_loss <= self.threshold:
            return np.empty(0, dtype=np.int64)
        self._cool = self.cooldown
        return self._draw(self.per_event_count)


class AccuracyTriggerStrategy(_BudgetedBaseline):
    """Fire when an evaluation pass shows a drop on any prior task.

    Evaluates every ``eval_interval`` steps and replays while any prior
    task sits more than ``drop_threshold`` below its best observed
    accuracy.  Reacts only after degradation is visible, and pays for the
    recurring evaluation passes.
    """

    name = "accuracy_trigger"

    def __init__(self, scenario, eval_interval: int = 25, drop_threshold: float = 0.05,
                 per_event_count: int | None = 64, budget_per_stage="scenario"):
        super().__init__(scenario, per_event_count, budget_per_stage)
        self.eval_interval = eval_interval
        self.drop_threshold = drop_threshold
        self.best_acc: dict[int, float] = {}
        self.eval_passes = 0

    def begin_stage(self, stage, prior_idx, current_idx):
        super().begin_stage(stage, prior_idx, current_idx)
        self.prior_tasks = sorted(set(self.task_of[prior_idx].tolist())) if len(prior_idx) else []

    def replay_for_step(self, ctx):
        if not self.prior_tasks or ctx.local_step % self.eval_interval != 0:
            return np.empty(0, dtype=np.int64)
        self.eval_passes += 1
        degraded = False
        for t in self.prior_tasks:
            acc = ctx.task_accuracy(t)
            best = self.best_acc.get(t, acc)
            self.best_acc[t] = max(best, acc)
            if acc < best - self.drop_threshold:
                degraded = True
        if not degraded:
            return np.empty(0, dtype=np.int64)
        return self._draw(self.per_event_count)

    def finish_run(self):
        return {"eval_passes": self.eval_passes}


# --------------------------------------------------------------------- engine


_VARIANT_OVERRIDES = {
    # scheduler-only: expanding intervals, uniform selection
    "mssr_sch": {"sampler": {"policy": "uniform"}},
    # sampler-only: fixed intervals, retention-prioritized selection
    "mssr_spl": {"scheduler": {"mode": "fixed", "initial_interval": 75}},
    # full: expanding intervals + prioritized selection
    "mssr_full": {},
}

_DEFAULT_ENGINE_DOC = {
    "scheduler": {"initial_interval": 30},
    "engine": {"batch_size": 256},
}


def _merge(base: dict, extra: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in extra.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


class EngineStrategy(ReplayStrategy):
    """Drive the replay engine in-process through its request API.

    Each stage runs against a stage-scoped engine, mirroring the per-stage
    fine-tuning protocol (the replay buffer is maintained within a stage):
    prior tasks register as replay candidates, the current task under its
    own tag.  Every step reports the trained batch's observed losses (epoch
    boundary every ``epoch_len`` steps), ticks the clock, and consolidates
    whatever the returned decision selected once it has been retrained.
    """

    def __init__(self, variant: str, scenario, epoch_len: int = 25, engine_doc: dict | None = None):
        if variant not in _VARIANT_OVERRIDES:
            raise ValidationError(f"unknown engine variant {variant!r}")
        self.name = variant
        self.epoch_len = epoch_len
        doc = _merge(_DEFAULT_ENGINE_DOC, scenario.engine_overrides or {})
        doc = _merge(doc, _VARIANT_OVERRIDES[variant])
        doc = _merge(doc, engine_doc or {})
        self._engine_doc = doc

    def begin_run(self, scenario, sample_ids, task_of, rng):
        super().begin_run(scenario, sample_ids, task_of, rng)
        self._index_of = {sid: i for i, sid in enumerate(sample_ids)}
        self._decision_log: list[dict] = []
        self._stage_step = 0
        self.engine: Engine | None = None

    def begin_stage(self, stage, prior_idx, current_idx):
        doc = _merge(self._engine_doc, {"engine": {"seed": int(self.rng.integers(2**63 - 1))}})
        self.engine = Engine(config_from_dict(doc))
        self._stage_step = 0
        for t in sorted(set(self.task_of[prior_idx].tolist())) if len(prior_idx) else []:
            ids = [self.sample_ids[i] for i in prior_idx[self.task_of[prior_idx] == t]]
            self.engine.register_samples(ids, f"task{t}")
        self.engine.register_samples(
            [self.sample_ids[i] for i in current_idx], f"task{stage}"
        )

    def replay_for_step(self, ctx):
        pairs = [
            (self.sample_ids[i], float(loss))
            for i, loss in zip(ctx.batch_idx, ctx.batch_losses)
        ]
        self._stage_step += 1
        epoch_end = self._stage_step % self.epoch_len == 0
        self.engine.report_losses(pairs, epoch_end=epoch_end)
        decision = self.engine.tick()
        if decision is None or not decision.selected:
            return np.empty(0, dtype=np.int64)
        record = decision.to_record()
        record["global_step"] = ctx.global_step
        self._decision_log.append(record)
        return np.array([self._index_of[sid] for sid in decision.selected], dtype=np.int64)

    def note_replayed(self, ctx, idx):
        super().note_replayed(ctx, idx)
        if len(idx):
            ids = [self.sample_ids[i] for i in idx]
            self.engine.mark_replayed(ids)
            post = ctx.observe_losses(np.asarray(idx))
            self.engine.report_losses(list(zip(ids, post.tolist())), replay=True)

    def finish_run(self):
        stats = self.engine.stats()
        return {
            "engine_stats": stats,
            "decision_log": self._decision_log,
        }


def strategy_catalog(include_engine: bool = True) -> list[StrategyConfig]:
    """The standard comparison set in presentation order."""
    out = [
        StrategyConfig("none"),
        StrategyConfig("fixed"),
        StrategyConfig("loss_trigger"),
        StrategyConfig("accuracy_trigger"),
        StrategyConfig("geometric"),
        StrategyConfig("ebbinghaus_sequence"),
    ]
    if include_engine:
        out += [
            StrategyConfig("mssr_sch"),
            StrategyConfig("mssr_spl"),
            StrategyConfig("mssr_full"),
        ]
    return out
