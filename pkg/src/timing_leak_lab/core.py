"""Discrete time model: slot traces, job traces, job patterns and parameters.

Time is counted in integer slots starting at slot 0. In every slot each of
the two parties (the user and the attacker) issues at most one unit job.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import ParameterError

#: Identifier of the pseudo random generator used for every random draw.
RNG_ALGORITHM = "numpy.random.PCG64"


def make_rng(seed: int) -> np.random.Generator:
    """Return the package's seeded generator (PCG64)."""
    return np.random.Generator(np.random.PCG64(seed))


def _check_rate(name, value, *, upper=1.0):
    if not (0.0 <= value <= upper) or math.isnan(value):
        raise ParameterError(f"{name} must lie in [0, {upper}], got {value!r}")


@dataclass(frozen=True, eq=False)
class SlotTrace:
    """Per-slot arrival indicators of one party."""

    indicators: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.indicators)
        if arr.ndim != 1:
            raise ParameterError("indicators must be one-dimensional")
        if arr.size and not np.isin(arr, (0, 1)).all():
            raise ParameterError("indicators must be 0 or 1")
        arr = arr.astype(np.int8)
        arr.setflags(write=False)
        object.__setattr__(self, "indicators", arr)

    @property
    def horizon_slots(self) -> int:
        return int(self.indicators.size)

    def arrival_times(self) -> np.ndarray:
        """Slot indices carrying a job, increasing."""
        return np.flatnonzero(self.indicators)

    def padded(self, horizon_slots: int) -> "SlotTrace":
        """Copy extended with idle slots up to ``horizon_slots``."""
        if horizon_slots < self.horizon_slots:
            raise ParameterError("cannot pad to a shorter horizon")
        out = np.zeros(horizon_slots, dtype=np.int8)
        out[: self.horizon_slots] = self.indicators
        return SlotTrace(out)

    def __eq__(self, other):
        if not isinstance(other, SlotTrace):
            return NotImplemented
        return np.array_equal(self.indicators, other.indicators)

    def __len__(self):
        return self.horizon_slots


@dataclass(frozen=True, eq=False)
class JobTrace:
    """Arrival and departure slots of one party's jobs, in arrival order.

    A job served during slot ``s`` departs at ``s + 1``, so ``D_i >= A_i + 1``.
    """

    arrivals: np.ndarray
    departures: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.arrivals, dtype=np.int64)
        d = np.asarray(self.departures, dtype=np.int64)
        if a.shape != d.shape or a.ndim != 1:
            raise ParameterError("arrivals and departures must be 1-D of equal length")
        if a.size:
            if np.any(np.diff(a) <= 0) or np.any(np.diff(d) <= 0):
                raise ParameterError("arrivals and departures must be strictly increasing")
            if np.any(d < a + 1):
                raise ParameterError("every job needs at least one slot of service")
        a.setflags(write=False)
        d.setflags(write=False)
        object.__setattr__(self, "arrivals", a)
        object.__setattr__(self, "departures", d)

    def __len__(self):
        return int(self.arrivals.size)

    @property
    def delays(self) -> np.ndarray:
        return self.departures - self.arrivals

    def __eq__(self, other):
        if not isinstance(other, JobTrace):
            return NotImplemented
        return np.array_equal(self.arrivals, other.arrivals) and np.array_equal(
            self.departures, other.departures
        )


@dataclass(frozen=True, eq=False)
class PatternSequence:
    """Job counts per period of ``period_slots`` slots.

    ``dropped_slots`` records the trailing partial period that was discarded.
    """

    period_slots: int
    counts: np.ndarray
    dropped_slots: int = 0

    def __post_init__(self):
        if self.period_slots < 1:
            raise ParameterError("period_slots must be positive")
        c = np.asarray(self.counts, dtype=np.int64)
        if c.size and (c.min() < 0 or c.max() > self.period_slots):
            raise ParameterError("counts must lie in [0, period_slots]")
        c.setflags(write=False)
        object.__setattr__(self, "counts", c)

    def __len__(self):
        return int(self.counts.size)

    def regroup(self, factor: int) -> "PatternSequence":
        """Sum consecutive groups of ``factor`` counts (period ``factor * period_slots``)."""
        if factor < 1:
            raise ParameterError("factor must be positive")
        n_full = len(self) // factor
        c = self.counts[: n_full * factor].reshape(n_full, factor).sum(axis=1)
        dropped = self.dropped_slots + (len(self) - n_full * factor) * self.period_slots
        return PatternSequence(self.period_slots * factor, c, dropped)


@dataclass(frozen=True)
class ModelParams:
    """Rates and periods of one scenario.

    ``lam`` is the user's Bernoulli rate, ``omega`` the attacker's long-run
    rate, ``T`` the clock period and ``T_acc`` the accumulate interval.
    """

    lam: float
    omega: float
    T: int
    T_acc: Optional[int] = None
    check_resolution: bool = field(default=False, compare=False)

    def __post_init__(self):
        _check_rate("lambda", self.lam)
        if not (0.0 <= self.omega < 1.0):
            raise ParameterError(f"omega must lie in [0, 1), got {self.omega!r}")
        if self.lam + self.omega >= 1.0:
            raise ParameterError(
                f"lambda + omega must be < 1 for a stable queue, got {self.lam + self.omega!r}"
            )
        if self.T < 1:
            raise ParameterError("T must be a positive slot count")
        if self.T_acc is not None and self.T_acc < 1:
            raise ParameterError("T_acc must be a positive slot count")
        if self.check_resolution and self.T < min_feasible_period(self.lam):
            raise ParameterError(
                f"T={self.T} is below the attacker's feasible resolution "
                f"{min_feasible_period(self.lam)} for lambda={self.lam}"
            )


def min_feasible_period(lam: float) -> int:
    """Smallest clock period the probe attack is analysed for: floor(1/(1-lam))."""
    if lam >= 1.0:
        raise ParameterError("no feasible period when lambda >= 1")
    return int(math.floor(1.0 / (1.0 - lam)))


def bernoulli_arrivals(lam: float, horizon_slots: int, seed: int) -> SlotTrace:
    """Draw an i.i.d. Bernoulli(``lam``) arrival trace."""
    _check_rate("lambda", lam)
    if horizon_slots < 0:
        raise ParameterError("horizon_slots must be nonnegative")
    rng = make_rng(seed)
    return SlotTrace((rng.random(horizon_slots) < lam).astype(np.int8))


def extract_pattern(trace: SlotTrace, period_slots: int) -> PatternSequence:
    """Count arrivals in consecutive windows of ``period_slots`` slots.

    Period ``k`` (1-based) covers slots ``[(k-1)*period, k*period)``. A trailing
    partial period is dropped with a :class:`UserWarning`.
    """
    if period_slots < 1:
        raise ParameterError("period_slots must be at least 1")
    ind = trace.indicators
    n_full = ind.size // period_slots
    dropped = ind.size - n_full * period_slots
    if dropped:
        warnings.warn(
            f"dropping {dropped} trailing slot(s) that do not fill a period of {period_slots}",
            stacklevel=2,
        )
    counts = ind[: n_full * period_slots].reshape(n_full, period_slots).sum(axis=1)
    return PatternSequence(period_slots, counts, dropped)


def slot_trace_from_times(arrival_times: Sequence[int], horizon_slots: int) -> SlotTrace:
    """Build an indicator trace with ones exactly at ``arrival_times``."""
    if horizon_slots < 0:
        raise ParameterError("horizon_slots must be nonnegative")
    times = np.asarray(arrival_times, dtype=np.int64).reshape(-1)
    if times.size:
        if np.any(np.diff(times) <= 0):
            raise ParameterError("arrival times must be strictly increasing")
        if times[0] < 0 or times[-1] >= horizon_slots:
            raise ParameterError("arrival time outside [0, horizon_slots)")
    out = np.zeros(horizon_slots, dtype=np.int8)
    out[times] = 1
    return SlotTrace(out)
