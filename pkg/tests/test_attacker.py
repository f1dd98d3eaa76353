import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from timing_leak_lab.analysis import fcfs_upper_bound
from timing_leak_lab.attacker import (
    AMBIGUOUS,
    EXACT,
    QueueObservation,
    build_probe_schedule,
    observe_queue,
    probe_from_times,
    reconstruct,
    reconstruction_table,
    type2_rate,
)
from timing_leak_lab.core import JobTrace, SlotTrace, bernoulli_arrivals, extract_pattern
from timing_leak_lab.errors import IncompleteTraceError, InfeasibleProbeError, ParameterError
from timing_leak_lab.schedulers import ScheduleOutcome, fcfs_run


def simulate(lam, omega, T, n, seed):
    probe = build_probe_schedule(T, omega, n, seed)
    user = bernoulli_arrivals(lam, probe.horizon_slots, seed + 1).indicators.copy()
    user[-1] = 0
    obs = observe_queue(probe, fcfs_run(SlotTrace(user), probe.to_slot_trace()))
    truth = extract_pattern(SlotTrace(user[:-1]), T).counts
    return obs, truth


@pytest.mark.parametrize("T", [1, 2, 3, 7])
def test_minimal_rate_probes_only_ticks(T):
    probe = build_probe_schedule(T, 1.0 / T, 20, seed=3)
    assert probe.type2_rate == 0.0
    assert probe.arrival_times.tolist() == list(range(0, 20 * T + 1, T))


def test_rate_substitution():
    assert type2_rate(2, 0.55) == pytest.approx(0.1, abs=1e-12)


def test_long_run_rate():
    probe = build_probe_schedule(5, 0.5, 100_000, seed=9)
    assert abs(probe.arrival_times.size / (5 * 100_000) - 0.5) < 0.005


def test_infeasible_rate():
    with pytest.raises(InfeasibleProbeError):
        build_probe_schedule(3, 0.2, 10, seed=0)
    with pytest.raises(ParameterError):
        build_probe_schedule(3, 1.5, 10, seed=0)


@settings(max_examples=40)
@given(
    T=st.integers(1, 8),
    frac=st.floats(0, 1),
    n=st.integers(0, 40),
    seed=st.integers(0, 10**6),
)
def test_schedule_shape(T, frac, n, seed):
    omega = 1.0 / T + frac * (1.0 - 1.0 / T)
    probe = build_probe_schedule(T, omega, n, seed)
    times = probe.arrival_times
    assert np.all(np.diff(times) > 0)
    assert probe.type1_times.tolist() == [k * T for k in range(n + 1)]
    assert np.all(probe.type2_times % T != 0)
    assert 0.0 <= probe.type2_rate <= 1.0
    # the gaps of each period add up to the period
    gaps = np.diff(times)
    period = times[:-1] // T
    assert np.all(np.bincount(period, weights=gaps, minlength=n) == T)


def test_reproducible_from_header():
    a = build_probe_schedule(4, 0.6, 50, seed=17)
    h = a.header()
    b = build_probe_schedule(h["T"], h["omega"], h["n_periods"], h["seed"])
    assert np.array_equal(a.arrival_times, b.arrival_times)


def _manual_outcome(arrivals, departures, horizon):
    empty = JobTrace([], [])
    return ScheduleOutcome(empty, JobTrace(arrivals, departures), np.zeros(horizon, int), horizon)


def test_queue_from_delay():
    probe = probe_from_times(5, 1, [])
    obs = observe_queue(probe, _manual_outcome([0, 5], [1, 9], 10))
    assert obs.queue.tolist() == [0, 3]
    assert obs.gaps.tolist() == [5]


def test_empty_system_probe():
    probe = probe_from_times(3, 2, [])
    out = fcfs_run(SlotTrace(np.zeros(7)), probe.to_slot_trace())
    assert observe_queue(probe, out).queue.tolist() == [0, 0, 0]


def test_missing_departure():
    probe = probe_from_times(5, 1, [])
    with pytest.raises(IncompleteTraceError):
        observe_queue(probe, _manual_outcome([0], [1], 10))


def test_gap_estimate_formula():
    obs = QueueObservation(2, np.array([0, 2]), np.array([2, 3]), np.array([2]))
    rec = reconstruct(obs)
    assert rec.gap_estimates.tolist() == [2]
    assert rec.period_status.tolist() == [EXACT]
    assert rec.period_estimates.tolist() == [2]


def test_empty_queue_is_ambiguous():
    obs = QueueObservation(2, np.array([0, 2]), np.array([1, 0]), np.array([2]))
    rec = reconstruct(obs)
    assert rec.gap_estimates.tolist() == [-1]
    assert rec.period_status.tolist() == [AMBIGUOUS]


def test_ambiguous_period_reports_lower_bound():
    # period 1 has gaps (1, 1): the first is exact, the second hits an empty queue
    obs = QueueObservation(2, np.array([0, 1, 2]), np.array([0, 2, 0]), np.array([1, 1]))
    rec = reconstruct(obs)
    assert rec.gap_estimates.tolist() == [2, -1]
    assert rec.period_estimates.tolist() == [2]
    assert rec.period_status.tolist() == [AMBIGUOUS]


@settings(max_examples=30, deadline=None)
@given(
    lam=st.floats(0.05, 0.6),
    frac=st.floats(0.5, 0.999),
    T=st.integers(2, 6),
    seed=st.integers(0, 10**6),
)
def test_exact_periods_are_correct(lam, frac, T, seed):
    omega = frac * (1.0 - lam)
    if omega * T < 1:
        omega = 1.0 / T
        if lam + omega >= 1:
            return
    obs, truth = simulate(lam, omega, T, 500, seed)
    rec = reconstruct(obs)
    mask = rec.exact_mask
    assert np.array_equal(rec.period_estimates[mask], truth[mask])
    # the certified lower bound never exceeds the truth
    assert np.all(rec.period_estimates <= truth)


def test_reconstruction_table_rows():
    obs, truth = simulate(0.4, 0.57, 2, 20, seed=4)
    rows = reconstruction_table(reconstruct(obs), truth)
    assert [r[0] for r in rows] == list(range(1, 21))
    assert all(r[3] in (EXACT, AMBIGUOUS) for r in rows)
    assert [r[1] for r in rows] == truth.tolist()


def test_busy_queue_probability_approaches_one():
    # probe rate fractions {0.5, 0.7, 0.9, 0.99} of the spare capacity at
    # lambda = 0.4, T = 2; fractions whose rate cannot cover every tick are
    # skipped because no probe schedule exists there
    lam, T, n = 0.4, 2, 100_000
    busy = []
    for c in (0.5, 0.7, 0.9, 0.99):
        omega = c * (1 - lam)
        if omega * T < 1:
            continue
        obs, _ = simulate(lam, omega, T, n, seed=int(c * 100))
        busy.append(float(np.mean(obs.queue > 0)))
    assert all(b2 >= b1 - 0.01 for b1, b2 in zip(busy, busy[1:]))
    assert busy[-1] > 0.99


@pytest.mark.parametrize("c", [0.9, 0.95, 0.99])
def test_busy_queue_probability_matches_chain(c):
    lam, T = 0.4, 2
    omega = c * (1 - lam)
    obs, _ = simulate(lam, omega, T, 200_000, seed=5)
    analytic = fcfs_upper_bound(lam, omega, T).components["pr_probe_nonempty"]
    assert abs(np.mean(obs.queue[:-1] > 0) - analytic) < 0.01
