"""Equivocation H(X^n | A^m, D^m) of the user's pattern given the attacker's view.

``equivocation_exact`` enumerates every user trace of ``n*T`` slots, runs the
scheduler on all of them at once, groups traces by the attacker's departure
vector and sums the conditional entropy of the pattern vector.
``equivocation_mc`` is the sampled plug-in counterpart; it is negatively
biased (unseen cells count as impossible) and is meant for cross-checks only.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..attacker import ProbeSchedule
from ..core import make_rng
from ..errors import EnumerationCapError, ParameterError
from ..schedulers import resolve_policy
from .bounds import _gap_entropy, _shift_reflect
from .chains import Pmf
from .entropy import LN2, binomial_pmf

MAX_EXACT_SLOTS = 22
_CHUNK = 1 << 16


def _check_probe(probe: ProbeSchedule, T: int, n_periods: int):
    if probe.T != T or probe.n_periods != n_periods:
        raise ParameterError(
            f"probe covers {probe.n_periods} periods of {probe.T} slots, "
            f"expected {n_periods} of {T}"
        )


def _all_traces(n_slots: int, start: int, stop: int) -> np.ndarray:
    idx = np.arange(start, stop, dtype=np.int64)
    return ((idx[:, None] >> np.arange(n_slots)) & 1).astype(np.int8)


def _observables(policy, users: np.ndarray, attacker: np.ndarray) -> np.ndarray:
    """Attacker departure vectors as one opaque key per row."""
    padded = np.zeros((users.shape[0], attacker.size), dtype=np.int8)
    padded[:, : users.shape[1]] = users
    deps = np.ascontiguousarray(policy.attacker_departures_batch(padded, attacker), dtype=np.int32)
    if deps.shape[1] == 0:
        return np.zeros(users.shape[0], dtype=np.int64)
    return deps.view(np.dtype((np.void, deps.dtype.itemsize * deps.shape[1]))).ravel()


def _pattern_keys(users: np.ndarray, T: int) -> np.ndarray:
    n = users.shape[1] // T
    counts = users.reshape(users.shape[0], n, T).sum(axis=2).astype(np.int64)
    weights = (T + 1) ** np.arange(n, dtype=np.int64)
    return counts @ weights


def _conditional_entropy(x_keys, obs_keys, weights) -> float:
    _, obs_id = np.unique(obs_keys, return_inverse=True)
    obs_id = obs_id.ravel().astype(np.int64)
    _, x_id = np.unique(x_keys, return_inverse=True)
    x_id = x_id.ravel().astype(np.int64)
    cell = obs_id * (int(x_id.max()) + 1) + x_id
    cells, cell_id = np.unique(cell, return_inverse=True)
    p_cell = np.bincount(cell_id.ravel(), weights=weights)
    p_obs = np.bincount(obs_id, weights=weights)
    cell_obs = cells // (int(x_id.max()) + 1)
    mask = p_cell > 0
    return float(np.sum(p_cell[mask] * np.log(p_obs[cell_obs[mask]] / p_cell[mask])) / LN2)


def equivocation_exact(
    lam: float,
    T: int,
    n_periods: int,
    probe: ProbeSchedule,
    policy="fcfs",
    *,
    max_slots: int = MAX_EXACT_SLOTS,
    **policy_kwargs,
) -> float:
    """Exact ``H(X^n | A^m, D^m) / n`` by enumerating all ``2^(nT)`` user traces.

    The attacker sends ``probe`` (ticks up to and including ``nT``); the user
    is idle from slot ``nT`` on, which does not affect any departure of a job
    that arrived by ``nT``.
    """
    if not (0.0 <= lam <= 1.0):
        raise ParameterError("lambda must lie in [0, 1]")
    if n_periods < 1:
        raise ParameterError("n_periods must be positive")
    n_slots = n_periods * T
    if n_slots > max_slots:
        raise EnumerationCapError(
            f"n*T = {n_slots} slots exceeds the enumeration cap of {max_slots}"
        )
    _check_probe(probe, T, n_periods)
    pol = resolve_policy(policy, **policy_kwargs)
    attacker = probe.to_slot_trace().indicators
    total = 1 << n_slots
    obs, xk, w = [], [], []
    for start in range(0, total, _CHUNK):
        users = _all_traces(n_slots, start, min(total, start + _CHUNK))
        k = users.sum(axis=1, dtype=np.int64)
        with np.errstate(divide="ignore"):
            logp = k * np.log(lam) + (n_slots - k) * np.log1p(-lam) if 0 < lam < 1 else None
        if logp is None:
            prob = (k == (n_slots if lam == 1.0 else 0)).astype(float)
        else:
            prob = np.exp(logp)
        obs.append(_observables(pol, users, attacker))
        xk.append(_pattern_keys(users, T))
        w.append(prob)
    h = _conditional_entropy(np.concatenate(xk), np.concatenate(obs), np.concatenate(w))
    return max(h, 0.0) / n_periods


@dataclass(frozen=True)
class MCEstimate:
    estimate: float
    ci_low: float
    ci_high: float
    replications: int
    distinct_observations: int
    upper_bound_only: bool
    seed: int
    n_boot: int
    confidence: float

    def contains(self, value: float) -> bool:
        return self.ci_low <= value <= self.ci_high


def equivocation_mc(
    lam: float,
    T: int,
    n_periods: int,
    probe: ProbeSchedule,
    policy="fcfs",
    replications: int = 10_000,
    seed: int = 0,
    *,
    n_boot: int = 400,
    confidence: float = 0.95,
    **policy_kwargs,
) -> MCEstimate:
    """Plug-in estimate of ``H(X^n | A^m, D^m) / n`` from sampled user traces.

    Observables are binned exactly (identical departure vectors). The
    interval is the basic bootstrap interval ``[2h - q_hi, 2h - q_lo]`` from
    multinomial resampling of the observed cells. No bias correction is
    applied to the point estimate. If every observation is distinct the
    plug-in collapses to zero and ``upper_bound_only`` is set.
    """
    if replications < 1000:
        raise ParameterError("use at least 1000 replications")
    _check_probe(probe, T, n_periods)
    pol = resolve_policy(policy, **policy_kwargs)
    rng = make_rng(seed)
    n_slots = n_periods * T
    attacker = probe.to_slot_trace().indicators
    users = (rng.random((replications, n_slots)) < lam).astype(np.int8)
    obs_keys = np.concatenate(
        [_observables(pol, users[i : i + _CHUNK], attacker) for i in range(0, replications, _CHUNK)]
    )
    x_keys = _pattern_keys(users, T)

    _, obs_id = np.unique(obs_keys, return_inverse=True)
    obs_id = obs_id.ravel().astype(np.int64)
    n_obs = int(obs_id.max()) + 1
    stride = int(x_keys.max()) + 1
    cells, counts = np.unique(obs_id * stride + x_keys, return_counts=True)
    cell_obs = cells // stride

    def plug_in(c):
        c_obs = np.bincount(cell_obs, weights=c, minlength=n_obs)
        m = c > 0
        return float(np.sum(c[m] * np.log(c_obs[cell_obs[m]] / c[m])) / (c.sum() * LN2))

    h = plug_in(counts.astype(float))
    boot = np.empty(n_boot)
    freq = counts / counts.sum()
    for b in range(n_boot):
        boot[b] = plug_in(rng.multinomial(replications, freq).astype(float))
    alpha = (1.0 - confidence) / 2.0
    lo_q, hi_q = np.quantile(boot, [alpha, 1.0 - alpha])
    scale = 1.0 / n_periods
    return MCEstimate(
        estimate=h * scale,
        ci_low=max(2 * h - hi_q, 0.0) * scale,
        ci_high=(2 * h - lo_q) * scale,
        replications=replications,
        distinct_observations=n_obs,
        upper_bound_only=n_obs == replications,
        seed=seed,
        n_boot=n_boot,
        confidence=confidence,
    )


def boundary_probe_equivocation(
    lam: float, T: int, n_periods: int, initial: Optional[Pmf] = None
) -> float:
    """Exact per-period equivocation under FCFS when the attacker probes only the ticks.

    With one probe per tick the pattern ``X_k`` is the only user input between
    consecutive observations, so ``H(X^n | Q^{n+1}) = sum_k H(X_k | Q_k, Q_{k+1})``.
    The tick queue starts from ``initial`` (empty queue by default).
    """
    if n_periods < 1:
        raise ParameterError("n_periods must be positive")
    base = np.asarray(initial.probs) if initial is not None else np.array([1.0])
    dist = np.zeros(base.size + n_periods + 2)
    dist[: base.size] = base
    v = binomial_pmf(T, lam)
    h = 0.0
    for _ in range(n_periods):
        h += _gap_entropy(dist, T, lam)
        dist = _shift_reflect(dist, v, T)
    return h / n_periods
