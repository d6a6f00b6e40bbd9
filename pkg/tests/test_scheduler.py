from __future__ import annotations

import math

import pytest

from memreplay.errors import ValidationError
from memreplay.memory import MemoryParams, SampleState, time_to_threshold
from memreplay.scheduler import (
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


def test_default_params_match_published_table():
    p = SchedulerParams()
    assert p.initial_interval == 100.0
    assert p.eta_p == 0.5
    assert p.rho_p == 0.05
    assert p.theta == 0.5
    assert p.lambda0 == 0.3
    assert p.lambda_min == 0.05
    assert p.beta_r == 1e-5
    assert p.mode == "expanding"


def test_param_validation():
    with pytest.raises(ValidationError):
        SchedulerParams(lambda_min=0.4, lambda0=0.3)
    with pytest.raises(ValidationError):
        SchedulerParams(initial_interval=0)
    with pytest.raises(ValidationError):
        SchedulerParams(mode="surprise")
    with pytest.raises(ValidationError):
        SchedulerParams(mode="explicit_sequence")


# ------------------------------------------------------------- interval chain


def test_interval_expansion_worked_chain():
    # oracle: 100*(1+0.5e^-0.05), then that*(1+0.5e^-0.1)
    p = SchedulerParams()
    st = ScheduleState.initial(p)
    st.cycle_index = 1
    first = next_interval(st, p)
    assert first == pytest.approx(100.0 * (1.0 + 0.5 * math.exp(-0.05)), abs=1e-9)
    assert first == pytest.approx(147.561, abs=1e-3)
    st.current_interval = first
    st.cycle_index = 2
    second = next_interval(st, p)
    assert second == pytest.approx(first * (1.0 + 0.5 * math.exp(-0.10)), abs=1e-9)
    assert second == pytest.approx(214.32, abs=1e-2)


def test_interval_unchanged_with_zero_gain():
    p = SchedulerParams(eta_p=0.0)
    st = ScheduleState.initial(p)
    st.cycle_index = 3
    assert next_interval(st, p) == p.initial_interval


def test_next_interval_requires_expanding_mode():
    p = SchedulerParams(mode="fixed")
    with pytest.raises(ValidationError):
        next_interval(ScheduleState.initial(p), p)


def test_interval_ratio_approaches_one():
    p = SchedulerParams()
    st = ScheduleState.initial(p)
    ratios = []
    for k in range(1, 400):
        st.cycle_index = k
        nxt = next_interval(st, p)
        ratios.append(nxt / st.current_interval)
        st.current_interval = nxt
    assert all(r > 1.0 for r in ratios)
    assert ratios[-1] == pytest.approx(1.0, abs=1e-8)


# --------------------------------------------------------------- replay ratio


def test_replay_ratio_boundary_values():
    p = SchedulerParams()
    assert replay_ratio(0, p) == pytest.approx(0.30, abs=1e-12)
    assert replay_ratio(10**9, p) == pytest.approx(0.05, abs=1e-9)
    # oracle: 0.05 + 0.25 * exp(-1)
    assert replay_ratio(10**5, p) == pytest.approx(0.05 + 0.25 * math.exp(-1.0), abs=1e-12)
    assert replay_ratio(10**5, p) == pytest.approx(0.14197, abs=1e-5)


def test_replay_ratio_monotone_and_bounded():
    p = SchedulerParams()
    prev = 1.0
    for step in range(0, 2_000_000, 7919):
        lam = replay_ratio(step, p)
        assert p.lambda_min <= lam <= p.lambda0
        assert lam <= prev
        prev = lam


def test_replay_ratio_additive_form():
    p = SchedulerParams(ratio_form="additive")
    assert replay_ratio(0, p) == pytest.approx(0.35, abs=1e-12)
    assert replay_ratio(10**9, p) == pytest.approx(0.05, abs=1e-9)


# --------------------------------------------------------------- should_replay


def drive(params: SchedulerParams, steps: int, override=None):
    st = ScheduleState.initial(params)
    events = []
    for step in range(1, steps + 1):
        fired, lam = should_replay(step, st, params, interval_override=override)
        if fired:
            events.append((step, lam))
    return st, events


def test_first_trigger_at_initial_interval():
    st, events = drive(SchedulerParams(), 101)
    assert events[0][0] == 100


def test_explicit_sequence_cumulative_steps():
    p = SchedulerParams(mode="explicit_sequence", explicit_intervals=[1, 2, 4, 7, 15])
    st, events = drive(p, 29)
    assert [e[0] for e in events] == [1, 3, 7, 14, 29]


def test_explicit_sequence_repeats_last_interval():
    p = SchedulerParams(mode="explicit_sequence", explicit_intervals=[1, 2, 4, 7, 15])
    st, events = drive(p, 60)
    assert [e[0] for e in events] == [1, 3, 7, 14, 29, 44, 59]


def test_fixed_mode_arithmetic_progression():
    p = SchedulerParams(mode="fixed", initial_interval=3)
    st, events = drive(p, 30)
    assert [e[0] for e in events] == [3, 6, 9, 12, 15, 18, 21, 24, 27, 30]


def test_zero_gain_expanding_equals_fixed_progression():
    # degenerate equivalence brute-forced over 10^4 steps
    pa = SchedulerParams(eta_p=0.0, initial_interval=7)
    pb = SchedulerParams(mode="fixed", initial_interval=7)
    _, ea = drive(pa, 10_000)
    _, eb = drive(pb, 10_000)
    assert ea == eb
    assert [s for s, _ in ea] == list(range(7, 10_001, 7))


def test_event_steps_and_gaps_strictly_increase():
    st, events = drive(SchedulerParams(initial_interval=10), 5000)
    steps = [s for s, _ in events]
    gaps = [b - a for a, b in zip(steps, steps[1:])]
    assert all(b > a for a, b in zip(steps, steps[1:]))
    assert all(b > a for a, b in zip(gaps, gaps[1:]))


def test_step_regression_rejected():
    p = SchedulerParams()
    st = ScheduleState.initial(p)
    should_replay(5, st, p)
    with pytest.raises(ValidationError):
        should_replay(4, st, p)


def test_deterministic_event_log():
    p = SchedulerParams(initial_interval=13)
    _, e1 = drive(p, 3000)
    _, e2 = drive(p, 3000)
    assert e1 == e2


def test_lambda_recorded_at_firing_step():
    p = SchedulerParams(initial_interval=100, beta_r=1e-5)
    _, events = drive(p, 101)
    step, lam = events[0]
    assert lam == pytest.approx(replay_ratio(step, p), abs=1e-15)
    assert lam == pytest.approx(0.2998, abs=1e-4)


def test_threshold_mode_uses_override_interval():
    p = SchedulerParams(mode="threshold", initial_interval=10)
    st = ScheduleState.initial(p)
    fired, _ = should_replay(10, st, p, interval_override=25.0)
    assert fired
    assert st.next_trigger_step == 35


# ---------------------------------------------------------- mean-field stats


def test_mean_field_singleton():
    mp = MemoryParams()
    st = SampleState("a", s=1.0, norm_loss=0.5)
    stats = mean_field_stats([st], mp)
    assert stats.avg_hazard == pytest.approx(0.11, abs=1e-12)
    assert stats.avg_stability == 1.0
    assert stats.avg_phi == pytest.approx(0.5, abs=1e-12)


def test_mean_field_arithmetic_mean():
    mp = MemoryParams(alpha=0.1, gamma_d=0.0)
    a = SampleState("a", s=1.0)   # hazard 0.1
    b = SampleState("b", s=1.0)
    b.s = 1.0 / 3.0 * 3.0  # keep s valid
    stats = mean_field_stats([a, b], mp)
    assert stats.avg_hazard == pytest.approx(0.1, abs=1e-12)
    mp2 = MemoryParams(alpha=0.0, gamma_d=0.0, s_min=0.5)
    c = SampleState("c", s=0.5)
    d = SampleState("d", s=1.5)
    stats2 = mean_field_stats([c, d], mp2)
    assert stats2.avg_stability == 1.0


def test_mean_field_homogeneous_population():
    mp = MemoryParams()
    pop = [SampleState(str(i), s=1.0, norm_loss=0.5) for i in range(10)]
    stats = mean_field_stats(pop, mp)
    assert stats.avg_hazard == pytest.approx(0.11, abs=1e-12)


def test_mean_field_empty_population_rejected():
    with pytest.raises(ValidationError):
        mean_field_stats([], MemoryParams())


# ------------------------------------------------------- threshold interval


def test_threshold_interval_worked_example():
    t = threshold_interval(MeanFieldStats(0.11, 1.0, 0.5), 0.5)
    assert t == pytest.approx(math.log(2.0) / 0.11, abs=1e-12)
    assert t == pytest.approx(6.3013, abs=1e-4)


def test_threshold_interval_inverse_in_hazard():
    t1 = threshold_interval(MeanFieldStats(0.1, 1.0, 0.5), 0.5)
    t2 = threshold_interval(MeanFieldStats(0.2, 1.0, 0.5), 0.5)
    assert t2 == pytest.approx(t1 / 2.0, rel=1e-12)


def test_threshold_interval_zero_hazard_never_fires():
    assert threshold_interval(MeanFieldStats(0.0, 1.0, 0.0), 0.5) == math.inf


def test_threshold_matches_per_sample_time_to_threshold():
    # homogeneous population: the mean-field interval equals the per-sample
    # threshold time within 1e-9 relative
    mp = MemoryParams()
    pop = [SampleState(str(i), s=2.0, norm_loss=0.3) for i in range(5)]
    stats = mean_field_stats(pop, mp)
    tau_pop = threshold_interval(stats, 0.5)
    tau_one = time_to_threshold(pop[0], 0.3, 0.5, mp)
    assert tau_pop == pytest.approx(tau_one, rel=1e-9)


# -------------------------------------------------------------- optimal ratio


def test_optimal_ratio_break_even():
    assert optimal_ratio(0.5, 2.0, 1.0) == 0.0


def test_optimal_ratio_saturation():
    b = 2.0
    mu = 1.0
    utility = mu * math.exp(b) / b
    assert optimal_ratio(utility, b, mu) == pytest.approx(1.0, abs=1e-12)


def test_optimal_ratio_worked_example():
    assert optimal_ratio(2.0, 2.0, 1.0) == pytest.approx(0.5 * math.log(4.0), abs=1e-12)
    assert optimal_ratio(2.0, 2.0, 1.0) == pytest.approx(0.6931, abs=1e-4)


def test_optimal_ratio_validation():
    with pytest.raises(ValidationError):
        optimal_ratio(1.0, -1.0, 1.0)
    with pytest.raises(ValidationError):
        optimal_ratio(1.0, 1.0, 0.0)
