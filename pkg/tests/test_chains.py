import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import binom_pmf, real_chain_row
from timing_leak_lab.analysis.chains import (
    REAL,
    VIRTUAL,
    ClockChainSpec,
    Pmf,
    chain_residual,
    check_dominance,
    check_z_identity,
    dominance_gap,
    lyapunov_drift_check,
    stationary_clock_chain,
    tail_bound_slack,
    transition_matrix,
    virtual_tail_bound,
)
from timing_leak_lab.core import make_rng
from timing_leak_lab.errors import NumericalError, ParameterError, TruncationError
from timing_leak_lab.schedulers import lindley_backlog

GRID = [
    (lam, c * (1 - lam), T)
    for lam in (0.1, 0.25, 0.4)
    for T in (2, 3, 5)
    for c in (0.9, 0.95, 0.99)
]


def feasible_params():
    return st.tuples(st.floats(0.0, 0.6), st.floats(0.05, 0.98), st.integers(2, 5)).filter(
        lambda p: p[1] * (1 - p[0]) * p[2] >= 1
    ).map(lambda p: (p[0], p[1] * (1 - p[0]), p[2]))


@pytest.mark.parametrize("T", [2, 3, 5])
@pytest.mark.parametrize("variant", [REAL, VIRTUAL])
def test_idle_user_absorbs_at_zero(T, variant):
    pmf = stationary_clock_chain(ClockChainSpec(0.0, 1.0 / T, T, variant))
    assert pmf.probs[0] == pytest.approx(1.0, abs=1e-14)


@pytest.mark.parametrize("lam,omega,T", [(0.4, 0.5, 2), (0.3, 0.5, 3), (0.2, 0.45, 4)])
def test_real_kernel_rows_match_slot_enumeration(lam, omega, T):
    P = transition_matrix(ClockChainSpec(lam, omega, T, REAL), 40).toarray()
    for q0 in range(12):
        row = real_chain_row(q0, lam, omega, T)
        ref = np.zeros(41)
        for q, p in row.items():
            ref[q] += p
        assert np.allclose(P[q0], ref, atol=1e-15)


def test_virtual_kernel_rows_by_hand():
    lam, omega, T = 0.4, 0.5, 2
    P = transition_matrix(ClockChainSpec(lam, omega, T, VIRTUAL), 20).toarray()
    # increment 1 + a + x - 2 with a ~ B(1, 0), x ~ B(2, 0.4)
    x = binom_pmf(2, lam)
    assert P[0, 0] == pytest.approx(x[0] + x[1])
    assert P[0, 1] == pytest.approx(x[2])
    assert P[5, 4] == pytest.approx(x[0])
    assert P[5, 5] == pytest.approx(x[1])
    assert P[5, 6] == pytest.approx(x[2])


def test_rows_are_stochastic():
    for variant in (REAL, VIRTUAL):
        P = transition_matrix(ClockChainSpec(0.3, 0.6, 3, variant), 50)
        assert np.allclose(np.asarray(P.sum(axis=1)).ravel(), 1.0, atol=1e-14)


def test_virtual_mean_matches_simulation():
    lam, omega, T = 0.4, 0.5, 2
    pmf = stationary_clock_chain(ClockChainSpec(lam, omega, T, VIRTUAL))
    rng = make_rng(2024)
    n = 10**6
    a = rng.binomial(T - 1, (omega * T - 1) / (T - 1), n)
    x = rng.binomial(T, lam, n)
    # the batch update is a Lindley recursion with unit-slot increments 1 + a + x - T
    q = lindley_backlog((1 + a + x - T + 1)[None, :])[0, 1:]
    burn = 10_000
    q = q[burn:]
    # batch means standard error for the correlated sequence
    means = q[: q.size // 100 * 100].reshape(100, -1).mean(axis=1)
    se = means.std(ddof=1) / np.sqrt(means.size)
    assert abs(q.mean() - pmf.mean()) < 3 * se


@pytest.mark.parametrize("lam,omega,T", GRID)
def test_stationary_residual(lam, omega, T):
    for variant in (REAL, VIRTUAL):
        spec = ClockChainSpec(lam, omega, T, variant)
        pmf = stationary_clock_chain(spec)
        assert chain_residual(pmf, spec) < 1e-10
        assert abs(pmf.probs.sum() - 1.0) <= 1e-12
        assert pmf.meta["tail_mass"] < 1e-12


def test_power_iteration_agrees_with_direct_solve():
    spec = ClockChainSpec(0.2, 0.5, 3, REAL)
    direct = stationary_clock_chain(spec)
    power = stationary_clock_chain(spec, method="power")
    n = min(direct.probs.size, power.probs.size)
    assert np.abs(direct.probs[:n] - power.probs[:n]).sum() < 1e-9


def test_power_iteration_reports_non_convergence():
    spec = ClockChainSpec(0.4, 0.59, 2, REAL)
    with pytest.raises(NumericalError) as info:
        stationary_clock_chain(spec, method="power", max_iter=5)
    assert "iterations" in info.value.diagnostics


def test_fixed_truncation_too_small():
    with pytest.raises(TruncationError):
        stationary_clock_chain(ClockChainSpec(0.4, 0.59, 2, REAL, q_max=16))


def test_unstable_chain_rejected():
    with pytest.raises(ParameterError):
        ClockChainSpec(0.5, 0.5, 2)


@settings(max_examples=25, deadline=None)
@given(feasible_params(), st.sampled_from([REAL, VIRTUAL]))
def test_drift_identity_above_threshold(params, variant):
    lam, omega, T = params
    eps = (1 - omega - lam) * T
    for row in lyapunov_drift_check(lam, omega, T, range(3 * T + 5), variant):
        assert row.drift <= T + 1e-12
        assert row.satisfied
        if row.q >= T - 1:
            assert abs(row.drift + eps) <= 1e-12


def test_drift_at_empty_queue():
    (row,) = lyapunov_drift_check(0.4, 0.5, 2, [0])
    eps = (1 - 0.5 - 0.4) * 2
    assert row.drift <= -eps + 2


@pytest.mark.parametrize("lam,omega,T", [(0.4, 0.5, 2)] + GRID)
def test_z_identity(lam, omega, T):
    pmf = stationary_clock_chain(ClockChainSpec(lam, omega, T, VIRTUAL))
    assert check_z_identity(pmf, lam, omega, T) < 1e-8


def test_z_identity_rejects_single_slot_period():
    pmf = Pmf(np.array([1.0]))
    with pytest.raises(ParameterError):
        check_z_identity(pmf, 0.2, 0.5, 1)


def test_tail_bound_is_tight_for_two_slots():
    # for T = 2 the low-state mass equals the bound in closed form
    lam, omega = 0.3, 0.6
    pmf = stationary_clock_chain(ClockChainSpec(lam, omega, 2, VIRTUAL))
    closed = (1 - omega - lam) / ((1 - omega) * (1 - lam) ** 2)
    assert virtual_tail_bound(lam, omega, 2) == pytest.approx(closed, rel=1e-14)
    assert pmf.probs[0] == pytest.approx(closed, rel=1e-10)


@pytest.mark.parametrize("lam,omega,T", GRID)
def test_tail_bound_holds(lam, omega, T):
    pmf = stationary_clock_chain(ClockChainSpec(lam, omega, T, VIRTUAL))
    # equality cases (T = 2) are decided to rounding precision
    assert tail_bound_slack(pmf, lam, omega, T) >= -1e-12


def test_dominance_reflexive():
    pmf = stationary_clock_chain(ClockChainSpec(0.4, 0.5, 2, REAL))
    assert check_dominance(pmf, pmf)


@pytest.mark.parametrize("lam,omega,T", [(0.4, 0.5, 2)] + GRID)
def test_real_chain_dominates_virtual(lam, omega, T):
    real = stationary_clock_chain(ClockChainSpec(lam, omega, T, REAL))
    virt = stationary_clock_chain(ClockChainSpec(lam, omega, T, VIRTUAL))
    assert check_dominance(real, virt)


def test_shifted_virtual_breaks_dominance():
    real = stationary_clock_chain(ClockChainSpec(0.4, 0.5, 2, REAL))
    virt = stationary_clock_chain(ClockChainSpec(0.4, 0.5, 2, VIRTUAL))
    shifted = Pmf(np.concatenate([[0.0], virt.probs]))
    assert not check_dominance(real, shifted)
    assert dominance_gap(real, shifted) < -0.1


def test_pmf_validation_and_json():
    with pytest.raises(ParameterError):
        Pmf(np.array([0.5, 0.4]))
    with pytest.raises(ParameterError):
        Pmf(np.array([1.2, -0.2]))
    pmf = stationary_clock_chain(ClockChainSpec(0.2, 0.6, 2, VIRTUAL))
    back = Pmf.from_json(pmf.to_json())
    assert np.array_equal(back.probs, pmf.probs)
    assert back.meta == pmf.meta
    assert back.support_max == pmf.support_max
    assert pmf.ccdf()[0] == pytest.approx(1.0)
