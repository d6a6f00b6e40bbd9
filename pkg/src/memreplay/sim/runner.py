"""Stage driver: runs strategies through the task sequence and scores them.

One step trains the current-task batch, drifts every untouched sample,
hands the batch's observed losses to the strategy, and applies whatever the
strategy wants replayed as additional training.  After each stage every
task seen so far is evaluated to fill the performance matrix.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .learner import LearnerState, learner_drift, learner_train, observed_loss
from .metrics import ForgettingReport, forgetting_metric
from .scenario import ScenarioConfig
from .strategies import ReplayStrategy, StepContext, StrategyConfig


def _build_world(scenario: ScenarioConfig):
    sample_ids: list[str] = []
    task_of: list[int] = []
    gains: list[float] = []
    q0: list[float] = []
    for t, task in enumerate(scenario.tasks):
        for i in range(task.n_samples):
            sample_ids.append(f"t{t}_{i}")
            task_of.append(t)
            gains.append(task.learn_gain)
            q0.append(0.1 * (1.0 - task.base_difficulty))
    return (
        sample_ids,
        np.array(task_of, dtype=np.int64),
        LearnerState(np.array(q0), np.array(gains)),
    )


def run_strategy(scenario: ScenarioConfig, strategy_cfg: StrategyConfig, seed: int) -> ForgettingReport:
    """One deterministic (scenario, strategy, seed) run."""
    sample_ids, task_of, world = _build_world(scenario)
    seq = np.random.SeedSequence(seed)
    world_seed, obs_seed, strat_seed = seq.spawn(3)
    world_rng = np.random.default_rng(world_seed)
    obs_rng = np.random.default_rng(obs_seed)

    strategy: ReplayStrategy = strategy_cfg.build(scenario)
    strategy.begin_run(scenario, sample_ids, task_of, np.random.default_rng(strat_seed))

    noise = scenario.loss_noise_std

    def observe(idx: np.ndarray) -> np.ndarray:
        losses = observed_loss(world.q[idx])
        if noise > 0:
            losses = np.maximum(losses + obs_rng.normal(0.0, noise, size=len(idx)), 0.0)
        return losses

    def task_accuracy(t: int) -> float:
        return float(world.q[task_of == t].mean())

    task_slices = []
    start = 0
    for task in scenario.tasks:
        task_slices.append(np.arange(start, start + task.n_samples))
        start += task.n_samples

    n_stages = scenario.n_stages
    matrix: list[list[float]] = []
    curves: dict[str, list[tuple[int, float]]] = {f"task{t}": [] for t in range(n_stages)}
    events: list[dict] = []
    volume = 0
    global_step = 0
    first_drop_step: int | None = None
    t_start = time.perf_counter()

    for stage, task in enumerate(scenario.tasks):
        current_idx = task_slices[stage]
        prior_idx = (
            np.concatenate(task_slices[:stage]) if stage else np.empty(0, dtype=np.int64)
        )
        registered = np.arange(current_idx[-1] + 1)
        strategy.begin_stage(stage, prior_idx, current_idx)
        prior_acc_start = float(world.q[prior_idx].mean()) if stage else None

        order = world_rng.permutation(current_idx)
        cursor = 0
        for local_step in range(1, scenario.steps_per_stage + 1):
            global_step += 1
            if cursor + scenario.batch_size > len(order):
                order = world_rng.permutation(current_idx)
                cursor = 0
            batch_idx = order[cursor: cursor + scenario.batch_size]
            cursor += scenario.batch_size

            learner_train(world, batch_idx, step=global_step)
            mask = np.ones(len(registered), dtype=bool)
            mask[batch_idx] = False
            learner_drift(world, registered[mask], scenario.drift_rate_at(task, local_step))

            ctx = StepContext(
                stage=stage,
                local_step=local_step,
                global_step=global_step,
                batch_idx=batch_idx,
                batch_losses=observe(batch_idx),
                prior_idx=prior_idx,
                observe_losses=observe,
                task_accuracy=task_accuracy,
            )
            replay_idx = strategy.replay_for_step(ctx)
            if len(replay_idx):
                learner_train(world, replay_idx, step=global_step)
                volume += int(len(replay_idx))
                events.append(
                    {"step": global_step, "stage": stage, "count": int(len(replay_idx))}
                )
            strategy.note_replayed(ctx, replay_idx)

            if first_drop_step is None and stage > 0:
                if float(world.q[prior_idx].mean()) < prior_acc_start - 1e-9:
                    first_drop_step = global_step
            if local_step % scenario.curve_stride == 0:
                for t in range(stage + 1):
                    curves[f"task{t}"].append((global_step, task_accuracy(t)))

        matrix.append([task_accuracy(i) for i in range(stage + 1)])

    forgetting = forgetting_metric(matrix, n_stages)
    clamped = (
        sum(
            max(0.0, max(matrix[i][i] - matrix[t][i] for t in range(i + 1, n_stages)))
            for i in range(n_stages - 1)
        )
        / (n_stages - 1)
    )
    extras = strategy.finish_run()
    return ForgettingReport(
        strategy=strategy.name,
        seed=seed,
        matrix=matrix,
        forgetting=forgetting,
        forgetting_clamped=clamped,
        final_accuracy=matrix[-1],
        accuracy_curves=curves,
        replay_events=events,
        replay_volume=volume,
        event_count=len(events),
        first_drop_step=first_drop_step,
        first_trigger_step=strategy.first_trigger_step,
        extras=extras,
        runtime_s=round(time.perf_counter() - t_start, 3),
    )


@dataclass
class ComparisonRow:
    strategy: str
    seeds: list[int]
    forgetting_values: list[float]
    forgetting_mean: float
    forgetting_std: float
    forgetting_clamped_mean: float
    final_accuracy_mean: list[float]
    event_count_mean: float
    replay_volume_mean: float
    reports: list[ForgettingReport] = field(repr=False, default_factory=list)


def compare_strategies(
    scenario: ScenarioConfig, strategies: list[StrategyConfig], seeds: list[int]
) -> list[ComparisonRow]:
    """Run every strategy on identical scenario and seed streams."""
    if not seeds:
        raise ValueError("at least one seed required")
    rows = []
    for cfg in strategies:
        reports = [run_strategy(scenario, cfg, seed) for seed in seeds]
        values = [r.forgetting for r in reports]
        finals = np.array([r.final_accuracy for r in reports])
        rows.append(
            ComparisonRow(
                strategy=reports[0].strategy,
                seeds=list(seeds),
                forgetting_values=values,
                forgetting_mean=float(np.mean(values)),
                forgetting_std=float(np.std(values)),
                forgetting_clamped_mean=float(np.mean([r.forgetting_clamped for r in reports])),
                final_accuracy_mean=[float(v) for v in finals.mean(axis=0)],
                event_count_mean=float(np.mean([r.event_count for r in reports])),
                replay_volume_mean=float(np.mean([r.replay_volume for r in reports])),
                reports=reports,
            )
        )
    return rows
