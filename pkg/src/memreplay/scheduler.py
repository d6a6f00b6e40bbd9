"""Dataset-level replay scheduling.

Decides when replay events fire and how large the replay fraction is.
Four trigger modes:

* ``expanding`` (default): the interval between events grows by a factor
  (1 + eta_p * exp(-rho_p * k)) at cycle k, dense early and progressively
  sparser as stability accumulates.
* ``threshold``: the interval is recomputed at each firing from mean-field
  population statistics as ln(1/theta) / avg_hazard.
* ``fixed``: constant interval (the eta_p = 0 degenerate case).
* ``explicit_sequence``: a caller-supplied interval list, repeating its last
  entry once exhausted.

The replay fraction decays from lambda0 toward lambda_min:
lambda(t) = lambda_min + (lambda0 - lambda_min) * exp(-beta_r * t).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

from .errors import ValidationError
from .memory import MemoryParams, SampleState, hazard, phi

MODES = ("expanding", "threshold", "fixed", "explicit_sequence")
RATIO_FORMS = ("interpolated", "additive")


@dataclass
class SchedulerParams:
    """Interval-expansion and ratio-decay constants.

    Defaults are the production settings: initial interval 100 steps,
    expansion gain 0.5 decaying at rate 0.05 per cycle, trigger threshold
    0.5, and a replay ratio falling from 0.3 to a 0.05 floor at rate 1e-5
    per step.  ``ratio_form`` selects between the saturating interpolation
    (default, lambda(0) = lambda0) and the additive variant
    (lambda0 * exp(-beta_r t) + lambda_min) kept for reproduction studies.
    """

    initial_interval: float = 100.0
    eta_p: float = 0.5
    rho_p: float = 0.05
    theta: float = 0.5
    lambda0: float = 0.3
    lambda_min: float = 0.05
    beta_r: float = 1e-5
    mode: str = "expanding"
    explicit_intervals: list[float] | None = None
    ratio_form: str = "interpolated"

    def __post_init__(self):
        if not (math.isfinite(self.initial_interval) and self.initial_interval > 0):
            raise ValidationError("initial_interval must be finite and > 0")
        if self.eta_p < 0 or self.rho_p < 0:
            raise ValidationError("eta_p and rho_p must be >= 0")
        if not (0.0 < self.theta < 1.0):
            raise ValidationError("theta must lie in (0, 1)")
        if not (0.0 <= self.lambda0 <= 1.0):
            raise ValidationError("lambda0 must lie in [0, 1]")
        if not (0.0 <= self.lambda_min <= self.lambda0):
            raise ValidationError("lambda_min must lie in [0, lambda0]")
        if self.beta_r < 0:
            raise ValidationError("beta_r must be >= 0")
        if self.mode not in MODES:
            raise ValidationError(f"unknown scheduler mode {self.mode!r}")
        if self.ratio_form not in RATIO_FORMS:
            raise ValidationError(f"unknown ratio_form {self.ratio_form!r}")
        if self.mode == "explicit_sequence":
            if not self.explicit_intervals:
                raise ValidationError("explicit_sequence mode requires explicit_intervals")
            if any(not (math.isfinite(v) and v > 0) for v in self.explicit_intervals):
                raise ValidationError("explicit intervals must be finite and > 0")


@dataclass
class ScheduleState:
    """Live trigger state: cycle counter, carried interval, next trigger.

    ``current_interval`` keeps fractional precision; triggers land on
    step + ceil(interval) so no event fires early.  ``fired_events``
    records (cycle, step, lambda) per event.
    """

    cycle_index: int = 0
    current_interval: float = 100.0
    next_trigger_step: int = 100
    fired_events: list[tuple[int, int, float]] = field(default_factory=list)
    last_seen_step: int = -1

    @classmethod
    def initial(cls, params: SchedulerParams) -> ScheduleState:
        if params.mode == "explicit_sequence":
            first = float(params.explicit_intervals[0])
        else:
            first = float(params.initial_interval)
        return cls(
            cycle_index=0,
            current_interval=first,
            next_trigger_step=math.ceil(first),
            fired_events=[],
            last_seen_step=-1,
        )

    def state_dict(self) -> dict:
        return {
            "cycle_index": self.cycle_index,
            "current_interval": self.current_interval,
            "next_trigger_step": self.next_trigger_step,
            "fired_events": [list(e) for e in self.fired_events],
            "last_seen_step": self.last_seen_step,
        }

    @classmethod
    def from_state_dict(cls, payload: dict) -> ScheduleState:
        return cls(
            cycle_index=int(payload["cycle_index"]),
            current_interval=float(payload["current_interval"]),
            next_trigger_step=int(payload["next_trigger_step"]),
            fired_events=[(int(k), int(s), float(l)) for k, s, l in payload["fired_events"]],
            last_seen_step=int(payload["last_seen_step"]),
        )


class MeanFieldStats(NamedTuple):
    avg_hazard: float
    avg_stability: float
    avg_phi: float


def next_interval(state: ScheduleState, params: SchedulerParams) -> float:
    """Expanded interval for the next cycle in expanding mode.

    Returns current_interval * (1 + eta_p * exp(-rho_p * k)) with k the
    current cycle index; strictly larger than the current interval whenever
    eta_p > 0.
    """
    if params.mode != "expanding":
        raise ValidationError(f"next_interval requires expanding mode, got {params.mode!r}")
    k = state.cycle_index
    return state.current_interval * (1.0 + params.eta_p * math.exp(-params.rho_p * k))


def replay_ratio(step: int, params: SchedulerParams) -> float:
    """Replay fraction at a step, decaying from lambda0 toward lambda_min."""
    if step < 0:
        raise ValidationError("step must be >= 0")
    decay = math.exp(-params.beta_r * step)
    if params.ratio_form == "interpolated":
        return params.lambda_min + (params.lambda0 - params.lambda_min) * decay
    return min(params.lambda0 * decay + params.lambda_min, 1.0)


def should_replay(
    step: int,
    state: ScheduleState,
    params: SchedulerParams,
    interval_override: float | None = None,
) -> tuple[bool, float]:
    """Consult the trigger at ``step``; fire when step >= next_trigger_step.

    On firing: records the event, advances the cycle counter, derives the
    next interval per mode, and schedules the next trigger at
    step + ceil(interval).  ``interval_override`` supplies the
    threshold-mode interval computed from population statistics.
    Steps must be non-decreasing across calls.
    """
    if step < state.last_seen_step:
        raise ValidationError(
            f"step regression: {step} after {state.last_seen_step}"
        )
    state.last_seen_step = step
    if step < state.next_trigger_step:
        return False, 0.0

    lam = replay_ratio(step, params)
    state.cycle_index += 1
    k = state.cycle_index
    state.fired_events.append((k, step, lam))

    if params.mode == "expanding":
        state.current_interval *= 1.0 + params.eta_p * math.exp(-params.rho_p * k)
    elif params.mode == "explicit_sequence":
        seq = params.explicit_intervals
        state.current_interval = float(seq[k] if k < len(seq) else seq[-1])
    elif params.mode == "threshold":
        if interval_override is not None:
            if not (math.isfinite(interval_override) and interval_override > 0):
                raise ValidationError("interval override must be finite and > 0")
            state.current_interval = float(interval_override)
    # fixed: interval unchanged

    state.next_trigger_step = step + math.ceil(state.current_interval)
    return True, lam


def mean_field_stats(
    population: Iterable[SampleState], params: MemoryParams
) -> MeanFieldStats:
    """Arithmetic means of per-sample hazard, stability, and phi(norm_loss)."""
    n = 0
    h_sum = s_sum = p_sum = 0.0
    for st in population:
        p = phi(st.norm_loss, params.phi)
        h_sum += (params.alpha + params.gamma_d * p) / st.s
        s_sum += st.s
        p_sum += p
        n += 1
    if n == 0:
        raise ValidationError("mean-field stats require a non-empty population")
    return MeanFieldStats(h_sum / n, s_sum / n, p_sum / n)


def threshold_interval(stats: MeanFieldStats, theta: float) -> float:
    """Steps until the mean-field retention falls to ``theta``.

    ln(1/theta) / avg_hazard; infinite when the population hazard is zero.
    """
    if not (0.0 < theta < 1.0):
        raise ValidationError("theta must lie in (0, 1)")
    if stats.avg_hazard <= 0.0:
        return math.inf
    return math.log(1.0 / theta) / stats.avg_hazard


def optimal_ratio(utility: float, b: float, mu: float) -> float:
    """Stationary replay fraction of the benefit/cost trade-off.

    clip((1/b) * ln(utility * b / mu), 0, 1).  Diagnostic companion to the
    exponential ratio schedule; the rehearsal utility is caller-supplied.
    """
    if b <= 0 or mu <= 0:
        raise ValidationError("b and mu must be > 0")
    if utility * b <= 0:
        raise ValidationError("utility * b must be > 0")
    return min(1.0, max(0.0, math.log(utility * b / mu) / b))
