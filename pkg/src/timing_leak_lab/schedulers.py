"""Two-party unit-job schedulers: FCFS, accumulate-and-serve and TDMA.

Slot convention shared by all policies: jobs arriving in slot ``t`` are
enqueued at the start of the slot (the attacker's job ahead of the user's
when both arrive together), one job is served during a slot and a job served
in slot ``s`` departs at ``s + 1``. ``queue_lengths[t]`` is the number of jobs
present at the start of slot ``t`` before that slot's arrivals; under FCFS an
attacker job arriving at ``A`` therefore sees ``q(A) = D - A - 1`` jobs ahead.
Every run continues past the horizon until all admitted jobs have departed.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np

from .core import JobTrace, PatternSequence, SlotTrace
from .errors import ParameterError


class Priority(str, enum.Enum):
    USER_FIRST = "user"
    ATTACKER_FIRST = "attacker"

    @classmethod
    def parse(cls, value) -> "Priority":
        if isinstance(value, cls):
            return value
        key = str(value).lower().replace("-", "_")
        aliases = {
            "user": cls.USER_FIRST,
            "userfirst": cls.USER_FIRST,
            "user_first": cls.USER_FIRST,
            "attacker": cls.ATTACKER_FIRST,
            "attackerfirst": cls.ATTACKER_FIRST,
            "attacker_first": cls.ATTACKER_FIRST,
        }
        try:
            return aliases[key]
        except KeyError:
            raise ParameterError(f"unknown priority {value!r}") from None


@dataclass(frozen=True)
class AccPolicyConfig:
    T_acc: int
    priority: Priority = Priority.USER_FIRST

    def __post_init__(self):
        if int(self.T_acc) < 1:
            raise ParameterError("T_acc must be at least one slot")
        object.__setattr__(self, "T_acc", int(self.T_acc))
        object.__setattr__(self, "priority", Priority.parse(self.priority))


@dataclass(frozen=True, eq=False)
class ScheduleOutcome:
    user_trace: JobTrace
    attacker_trace: JobTrace
    queue_lengths: np.ndarray
    horizon_slots: int
    policy: str = ""

    @property
    def drain_slots(self) -> int:
        return int(self.queue_lengths.size) - self.horizon_slots


def _check_pair(user: SlotTrace, attacker: SlotTrace):
    if user.horizon_slots != attacker.horizon_slots:
        raise ParameterError(
            f"horizons differ: user {user.horizon_slots} vs attacker {attacker.horizon_slots}"
        )


def _occupancy(arrivals: np.ndarray, departures: np.ndarray, n_slots: int) -> np.ndarray:
    """Jobs present at the start of each slot, before that slot's arrivals."""
    t = np.arange(n_slots)
    arrived = np.searchsorted(np.sort(arrivals), t, side="left")
    departed = np.searchsorted(np.sort(departures), t, side="right")
    return arrived - departed


def lindley_backlog(arrivals: np.ndarray) -> np.ndarray:
    """Work-conserving unit-service backlog ``N[..., t]`` for ``t = 0..H``.

    ``N[t+1] = max(N[t] + arrivals[t] - 1, 0)`` with ``N[0] = 0``, evaluated in
    closed form as the reflected partial sum. Works along the last axis.
    """
    arr = np.asarray(arrivals, dtype=np.int64)
    steps = arr - 1
    zeros = np.zeros(arr.shape[:-1] + (1,), dtype=np.int64)
    walk = np.concatenate([zeros, np.cumsum(steps, axis=-1)], axis=-1)
    return walk - np.minimum.accumulate(walk, axis=-1)


def fcfs_run(user: SlotTrace, attacker: SlotTrace) -> ScheduleOutcome:
    """Serve both parties first-come-first-serve, attacker first on ties."""
    _check_pair(user, attacker)
    u = user.indicators.astype(np.int64)
    a = attacker.indicators.astype(np.int64)
    horizon = u.size
    backlog = lindley_backlog(u + a)
    ahead = backlog[:-1]
    drain = int(backlog[-1])
    queue = np.concatenate([ahead, drain - np.arange(drain)])

    ta = np.flatnonzero(a)
    tu = np.flatnonzero(u)
    att = JobTrace(ta, ta + ahead[ta] + 1)
    usr = JobTrace(tu, tu + ahead[tu] + a[tu] + 1)
    return ScheduleOutcome(usr, att, queue, horizon, "fcfs")


def acc_serve_run(user: SlotTrace, attacker: SlotTrace, cfg: AccPolicyConfig) -> ScheduleOutcome:
    """Accumulate-and-serve: batch each interval, serve the two batches back to back.

    Jobs arriving in ``[(k-1)*T_acc, k*T_acc)`` become eligible at ``k*T_acc``.
    Service of interval ``k`` starts at ``max(previous completion, k*T_acc)``;
    the batch order is fixed by ``cfg.priority`` and jobs inside a batch leave
    in arrival order on consecutive slots.
    """
    _check_pair(user, attacker)
    T_acc = cfg.T_acc
    horizon = user.horizon_slots
    tu = user.arrival_times()
    ta = attacker.arrival_times()
    du = np.empty(tu.size, dtype=np.int64)
    da = np.empty(ta.size, dtype=np.int64)
    n_intervals = -(-horizon // T_acc)
    completion = 0
    for k in range(1, n_intervals + 1):
        lo, hi = (k - 1) * T_acc, k * T_acc
        iu = np.arange(*np.searchsorted(tu, [lo, hi]))
        ia = np.arange(*np.searchsorted(ta, [lo, hi]))
        if iu.size == 0 and ia.size == 0:
            continue
        slot = max(completion, k * T_acc)
        if cfg.priority is Priority.USER_FIRST:
            batches = ((iu, du), (ia, da))
        else:
            batches = ((ia, da), (iu, du))
        for idx, dep in batches:
            dep[idx] = slot + 1 + np.arange(idx.size)
            slot += idx.size
        completion = slot

    last = max(int(du.max(initial=0)), int(da.max(initial=0)))
    n_slots = max(horizon, last)
    queue = _occupancy(np.concatenate([tu, ta]), np.concatenate([du, da]), n_slots)
    return ScheduleOutcome(JobTrace(tu, du), JobTrace(ta, da), queue, horizon, "acc")


def acc_attacker_departures_from_counts(
    attacker: SlotTrace, user_counts, T_acc: int, priority=Priority.USER_FIRST
) -> np.ndarray:
    """Attacker departures under accumulate-and-serve from the attacker trace and Z only.

    ``user_counts`` holds the user's job count per accumulate interval (a
    :class:`PatternSequence` with ``period_slots == T_acc`` or a plain array).
    Nothing about the timing of user jobs inside an interval is used.
    """
    priority = Priority.parse(priority)
    if isinstance(user_counts, PatternSequence):
        if user_counts.period_slots != T_acc:
            raise ParameterError("pattern period does not match T_acc")
        z = user_counts.counts
    else:
        z = np.asarray(user_counts, dtype=np.int64)
    ta = attacker.arrival_times()
    n_intervals = -(-attacker.horizon_slots // T_acc)
    if z.size < n_intervals:
        z = np.concatenate([z, np.zeros(n_intervals - z.size, dtype=np.int64)])
    batch_of = ta // T_acc
    a_counts = np.bincount(batch_of, minlength=n_intervals)
    out = np.empty(ta.size, dtype=np.int64)
    pos = 0
    completion = 0
    for k in range(1, n_intervals + 1):
        zk, ak = int(z[k - 1]), int(a_counts[k - 1])
        if zk == 0 and ak == 0:
            continue
        start = max(completion, k * T_acc)
        first = start + 1 + (zk if priority is Priority.USER_FIRST else 0)
        out[pos : pos + ak] = first + np.arange(ak)
        pos += ak
        completion = start + zk + ak
    return out


def _default_user_slot(t: int) -> bool:
    return t % 2 == 0


def tdma_run(
    user: SlotTrace,
    attacker: SlotTrace,
    user_slots: Optional[Callable[[int], bool]] = None,
) -> ScheduleOutcome:
    """Time-division service: each slot belongs to one party regardless of traffic.

    ``user_slots(t)`` says whether slot ``t`` is reserved for the user; the
    default reserves even slots. Each party is served FCFS within its own slots.
    """
    _check_pair(user, attacker)
    owner = user_slots or _default_user_slot
    horizon = user.horizon_slots
    tu = user.arrival_times()
    ta = attacker.arrival_times()
    du = _tdma_party(tu, owner, True)
    da = _tdma_party(ta, owner, False)
    last = max(int(du.max(initial=0)), int(da.max(initial=0)))
    n_slots = max(horizon, last)
    queue = _occupancy(np.concatenate([tu, ta]), np.concatenate([du, da]), n_slots)
    return ScheduleOutcome(JobTrace(tu, du), JobTrace(ta, da), queue, horizon, "tdma")


def _tdma_party(times, owner, is_user, max_idle=1_000_000):
    deps = np.empty(times.size, dtype=np.int64)
    t = 0
    idle = 0
    for i, arrival in enumerate(times):
        t = max(t, int(arrival))
        while bool(owner(t)) != is_user:
            t += 1
            idle += 1
            if idle > max_idle:
                raise ParameterError("slot assignment never grants this party a slot")
        deps[i] = t + 1
        t += 1
        idle = 0
    return deps


# Batched attacker observables, used by the exhaustive and Monte-Carlo
# equivocation estimators: rows of ``users`` are independent user traces.


@dataclass(frozen=True)
class FCFS:
    name = "fcfs"

    def run(self, user: SlotTrace, attacker: SlotTrace) -> ScheduleOutcome:
        return fcfs_run(user, attacker)

    def attacker_departures_batch(self, users: np.ndarray, attacker: np.ndarray) -> np.ndarray:
        a = np.asarray(attacker, dtype=np.int64)
        backlog = lindley_backlog(np.asarray(users, dtype=np.int64) + a)
        ta = np.flatnonzero(a)
        return ta + backlog[:, ta] + 1

    def describe(self) -> dict:
        return {"policy": self.name}


@dataclass(frozen=True)
class AccumulateAndServe:
    T_acc: int
    priority: Priority = Priority.USER_FIRST
    name = "acc"

    def __post_init__(self):
        cfg = AccPolicyConfig(self.T_acc, self.priority)
        object.__setattr__(self, "T_acc", cfg.T_acc)
        object.__setattr__(self, "priority", cfg.priority)

    @property
    def config(self) -> AccPolicyConfig:
        return AccPolicyConfig(self.T_acc, self.priority)

    def run(self, user: SlotTrace, attacker: SlotTrace) -> ScheduleOutcome:
        return acc_serve_run(user, attacker, self.config)

    def attacker_departures_batch(self, users: np.ndarray, attacker: np.ndarray) -> np.ndarray:
        users = np.asarray(users, dtype=np.int64)
        a = np.asarray(attacker, dtype=np.int64)
        horizon = a.size
        n_int = -(-horizon // self.T_acc)
        padded = np.zeros((users.shape[0], n_int * self.T_acc), dtype=np.int64)
        padded[:, : users.shape[1]] = users
        z = padded.reshape(users.shape[0], n_int, self.T_acc).sum(axis=2)
        ta = np.flatnonzero(a)
        a_counts = np.bincount(ta // self.T_acc, minlength=n_int)
        out = np.empty((users.shape[0], ta.size), dtype=np.int64)
        completion = np.zeros(users.shape[0], dtype=np.int64)
        pos = 0
        user_first = self.priority is Priority.USER_FIRST
        for k in range(1, n_int + 1):
            zk = z[:, k - 1]
            ak = int(a_counts[k - 1])
            busy = (zk + ak) > 0
            start = np.maximum(completion, k * self.T_acc)
            first = start + 1 + (zk if user_first else 0)
            out[:, pos : pos + ak] = first[:, None] + np.arange(ak)
            pos += ak
            completion = np.where(busy, start + zk + ak, completion)
        return out

    def describe(self) -> dict:
        return {"policy": self.name, "T_acc": self.T_acc, "priority": self.priority.value}


@dataclass(frozen=True)
class TDMA:
    user_slots: Optional[Callable[[int], bool]] = None
    name = "tdma"

    def run(self, user: SlotTrace, attacker: SlotTrace) -> ScheduleOutcome:
        return tdma_run(user, attacker, self.user_slots)

    def attacker_departures_batch(self, users: np.ndarray, attacker: np.ndarray) -> np.ndarray:
        owner = self.user_slots or _default_user_slot
        ta = np.flatnonzero(np.asarray(attacker))
        da = _tdma_party(ta, owner, False)
        return np.broadcast_to(da, (np.asarray(users).shape[0], da.size))

    def describe(self) -> dict:
        return {"policy": self.name}


Policy = Union[FCFS, AccumulateAndServe, TDMA]


def resolve_policy(policy, *, T_acc: Optional[int] = None, priority=Priority.USER_FIRST) -> Policy:
    """Accept a policy object or one of ``"fcfs"``, ``"acc"``, ``"tdma"``."""
    if isinstance(policy, (FCFS, AccumulateAndServe, TDMA)):
        return policy
    name = str(policy).lower()
    if name == "fcfs":
        return FCFS()
    if name == "tdma":
        return TDMA()
    if name in ("acc", "accumulate-and-serve"):
        if T_acc is None:
            raise ParameterError("the acc policy needs T_acc")
        return AccumulateAndServe(T_acc, priority)
    raise ParameterError(f"unknown policy {policy!r}")
