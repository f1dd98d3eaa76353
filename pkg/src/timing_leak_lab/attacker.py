"""Open-loop probe attack on a shared FCFS queue and pattern reconstruction.

The attacker sends a Type-I job on every clock tick ``0, T, 2T, ..., nT`` and
fills interior slots with Type-II jobs, each present independently with
probability ``(omega*T - 1)/(T - 1)``, to keep the queue busy. From the delay
of each probe it reads the queue length ``Q_i = D_i - A_i - 1``; whenever the
next probe still finds a nonempty queue, the number of user jobs that arrived
between two probes is exactly ``Q_{i+1} - Q_i + tau_i - 1``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import SlotTrace, make_rng
from .errors import IncompleteTraceError, InfeasibleProbeError, ParameterError
from .schedulers import ScheduleOutcome

EXACT = "Exact"
AMBIGUOUS = "Ambiguous"


def type2_rate(T: int, omega: float) -> float:
    """Per-slot Type-II probability that brings the long-run rate to ``omega``."""
    if T < 1:
        raise ParameterError("T must be a positive slot count")
    if omega * T < 1 - 1e-12:
        raise InfeasibleProbeError(
            f"omega*T = {omega * T:g} < 1: not enough rate for one probe per clock tick"
        )
    if T == 1:
        return 0.0
    rate = (omega * T - 1.0) / (T - 1.0)
    if rate > 1.0 + 1e-12:
        raise InfeasibleProbeError(f"Type-II rate {rate:g} exceeds one job per slot")
    return float(min(max(rate, 0.0), 1.0))


@dataclass(frozen=True, eq=False)
class ProbeSchedule:
    T: int
    omega: float
    n_periods: int
    seed: int
    type2_rate: float
    type1_times: np.ndarray
    type2_times: np.ndarray
    arrival_times: np.ndarray

    @property
    def horizon_slots(self) -> int:
        # includes the closing tick at n*T
        return self.n_periods * self.T + 1

    def to_slot_trace(self, horizon_slots: int | None = None) -> SlotTrace:
        horizon = self.horizon_slots if horizon_slots is None else horizon_slots
        if horizon < self.horizon_slots:
            raise ParameterError("horizon shorter than the probe schedule")
        ind = np.zeros(horizon, dtype=np.int8)
        ind[self.arrival_times] = 1
        return SlotTrace(ind)

    def header(self) -> dict:
        return {
            "T": self.T,
            "omega": self.omega,
            "n_periods": self.n_periods,
            "seed": self.seed,
            "type2_rate": self.type2_rate,
        }


def build_probe_schedule(T: int, omega: float, n_periods: int, seed: int) -> ProbeSchedule:
    """Draw the two-type probe schedule over ``n_periods`` clock periods."""
    if n_periods < 0:
        raise ParameterError("n_periods must be nonnegative")
    if not (0.0 <= omega <= 1.0):
        raise ParameterError(f"omega must lie in [0, 1], got {omega!r}")
    rate = type2_rate(T, omega)
    type1 = np.arange(n_periods + 1, dtype=np.int64) * T
    rng = make_rng(seed)
    if T > 1 and n_periods > 0:
        interior = (np.arange(n_periods)[:, None] * T + np.arange(1, T)).ravel()
        type2 = interior[rng.random(interior.size) < rate]
    else:
        type2 = np.empty(0, dtype=np.int64)
    merged = np.sort(np.concatenate([type1, type2]))
    return ProbeSchedule(T, float(omega), n_periods, seed, rate, type1, type2, merged)


def probe_from_times(T: int, n_periods: int, type2_times, omega: float | None = None) -> ProbeSchedule:
    """Schedule with an explicit Type-II placement (ticks are added automatically)."""
    type1 = np.arange(n_periods + 1, dtype=np.int64) * T
    type2 = np.unique(np.asarray(type2_times, dtype=np.int64))
    if type2.size and (np.any(type2 % T == 0) or type2.min() < 0 or type2.max() >= n_periods * T):
        raise ParameterError("Type-II jobs must sit on interior slots of the horizon")
    if omega is None:
        omega = (type1.size - 1 + type2.size) / max(n_periods * T, 1)
    rate = type2.size / max(n_periods * (T - 1), 1) if T > 1 else 0.0
    merged = np.sort(np.concatenate([type1, type2]))
    return ProbeSchedule(T, float(omega), n_periods, -1, float(rate), type1, type2, merged)


@dataclass(frozen=True, eq=False)
class QueueObservation:
    """Probe arrivals, the queue each saw, and the gaps between probes."""

    T: int
    arrivals: np.ndarray
    queue: np.ndarray
    gaps: np.ndarray

    @property
    def n_periods(self) -> int:
        return int(self.arrivals[-1] // self.T) if self.arrivals.size else 0


def observe_queue(probe: ProbeSchedule, outcome: ScheduleOutcome) -> QueueObservation:
    """Read ``Q_i = D_i - A_i - 1`` for every probe job from a schedule outcome."""
    att = outcome.attacker_trace
    idx = np.searchsorted(att.arrivals, probe.arrival_times)
    ok = idx < len(att)
    if not ok.all() or not np.array_equal(att.arrivals[idx], probe.arrival_times):
        raise IncompleteTraceError("probe job missing from the attacker's job trace")
    dep = att.departures[idx]
    queue = dep - probe.arrival_times - 1
    if np.any(queue < 0):
        raise IncompleteTraceError("departure precedes the end of service")
    return QueueObservation(probe.T, probe.arrival_times.copy(), queue, np.diff(probe.arrival_times))


@dataclass(frozen=True, eq=False)
class Reconstruction:
    """Per-gap and per-period estimates of the user's job counts.

    ``gap_estimates[i]`` is -1 where the gap is ambiguous. For ambiguous
    periods ``period_estimates`` is the certified lower bound formed by the
    exact gaps only.
    """

    T: int
    gap_estimates: np.ndarray
    gap_exact: np.ndarray
    period_estimates: np.ndarray
    period_status: np.ndarray

    @property
    def exact_mask(self) -> np.ndarray:
        return self.period_status == EXACT

    @property
    def exact_fraction(self) -> float:
        n = self.period_status.size
        return float(self.exact_mask.sum() / n) if n else float("nan")


def reconstruct(obs: QueueObservation) -> Reconstruction:
    """Invert the queue recursion between consecutive probes.

    A gap is exact when the later probe finds a nonempty queue: the server then
    never idled in between and every user arrival shows up in the queue.
    """
    q, tau = obs.queue, obs.gaps
    exact = q[1:] > 0
    est = np.where(exact, q[1:] - q[:-1] + tau - 1, -1)
    # the period of a gap is fixed by its left probe
    period = obs.arrivals[:-1] // obs.T
    n = obs.n_periods
    all_exact = np.bincount(period, weights=(~exact).astype(float), minlength=n) == 0
    lower = np.bincount(period, weights=np.where(exact, est, 0), minlength=n).astype(np.int64)
    status = np.where(all_exact, EXACT, AMBIGUOUS)
    return Reconstruction(obs.T, est, exact, lower, status)


def reconstruction_table(recon: Reconstruction, true_counts) -> list[tuple]:
    """Rows ``(period, true_X, est_X, status)`` with 1-based periods."""
    true_counts = np.asarray(true_counts)
    n = min(true_counts.size, recon.period_estimates.size)
    return [
        (k + 1, int(true_counts[k]), int(recon.period_estimates[k]), str(recon.period_status[k]))
        for k in range(n)
    ]
