"""Closed-form and chain-based privacy bounds, in bits per clock period."""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np

from ..attacker import build_probe_schedule, observe_queue, type2_rate
from ..core import SlotTrace, bernoulli_arrivals
from ..errors import InfeasibleProbeError, ParameterError
from ..schedulers import fcfs_run
from .chains import REAL, ClockChainSpec, stationary_clock_chain
from .entropy import binomial_entropy, binomial_pmf, entropy_bits

EXACT_MAX_T = 16


@dataclass(frozen=True)
class BoundReport:
    value: float
    components: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(
            {"value": self.value, "components": self.components, "params": self.params},
            sort_keys=True,
        )


def tdma_privacy(lam: float, T: int) -> float:
    """Privacy under a traffic-independent slot assignment: H(B(T, lam))."""
    return binomial_entropy(T, lam)


def acc_lower_bound(lam: float, T: int, T_acc: int) -> BoundReport:
    """Privacy lower bound of accumulate-and-serve with interval ``T_acc > T``.

    ``(1 - T/T_acc + T/T_L) H(X) - (T/T_acc) H(B(floor(T_acc/T) T, lam))`` with
    ``T_L = lcm(T, T_acc)``; the sum of ``l`` i.i.d. B(T, lam) is B(lT, lam).
    When ``T`` does not divide ``T_acc`` the expression can dip below zero; the
    reported value is clamped at 0 and the raw expression kept as
    ``components["formula"]``.
    """
    if T < 1:
        raise ParameterError("T must be positive")
    if T_acc <= T:
        raise ParameterError(f"the bound needs T_acc > T, got T_acc={T_acc}, T={T}")
    h_x = binomial_entropy(T, lam)
    t_l = math.lcm(T, T_acc)
    l_floor = T_acc // T
    h_sum = binomial_entropy(l_floor * T, lam)
    coeff = 1.0 - T / T_acc + T / t_l
    formula = coeff * h_x - (T / T_acc) * h_sum
    return BoundReport(
        max(formula, 0.0),
        {"H_X": h_x, "H_sum": h_sum, "T_L": t_l, "l": l_floor, "coefficient": coeff,
         "formula": formula},
        {"lambda": lam, "T": T, "T_acc": T_acc},
    )


def _shift_reflect(dist: np.ndarray, x_pmf: np.ndarray, tau: int) -> np.ndarray:
    """Law of ``(Q + X + 1 - tau)_+`` on the support of ``dist`` (top lumped)."""
    conv = np.convolve(dist, x_pmf)
    shift = tau - 1
    out = np.zeros(dist.size)
    out[0] = conv[: shift + 1].sum()
    body = conv[shift + 1 :]
    n = min(body.size, dist.size - 1)
    out[1 : 1 + n] = body[:n]
    out[-1] += body[n:].sum()
    return out


def _gap_entropy(dist: np.ndarray, tau: int, lam: float) -> float:
    """``H(X | tau, Q_i, Q_{i+1})`` for ``X ~ B(tau, lam)``, ``Q_i ~ dist``.

    Only ``Q_{i+1} = 0`` leaves uncertainty: given ``Q_i = k`` it happens iff
    ``X <= tau - 1 - k`` and the posterior is the truncated binomial.
    """
    v = binomial_pmf(tau, lam)
    h = 0.0
    for k in range(min(tau, dist.size)):
        post = v[: tau - k]
        mass = post.sum()
        if mass > 0 and dist[k] > 0:
            h += dist[k] * mass * entropy_bits(post / mass)
    return h


def _placements(T: int, rate: float):
    if rate <= 0.0:
        yield (), 1.0
        return
    for bits in itertools.product((0, 1), repeat=T - 1):
        s = sum(bits)
        w = rate**s * (1.0 - rate) ** (T - 1 - s)
        if w > 0:
            yield tuple(j + 1 for j, b in enumerate(bits) if b), w


def fcfs_upper_bound(
    lam: float,
    omega: float,
    T: int,
    method: str = "exact",
    samples: int = 100_000,
    *,
    seed: int = 0,
    on_infeasible: str = "raise",
    tol: float = 1e-12,
) -> BoundReport:
    """Upper bound on FCFS privacy achieved by the two-type probe attack.

    Evaluates ``E_s[sum_i H(X_i | tau_i, Q_i, Q_{i+1})]`` in the stationary
    regime. ``method="exact"`` enumerates every Type-II placement and pushes
    the stationary tick distribution through the reflected queue recursion;
    ``method="montecarlo"`` simulates ``samples`` periods and uses plug-in
    conditional entropies pooled over gaps of equal length.

    When ``omega * T < 1`` the probe strategy cannot put a job on every tick.
    ``on_infeasible="raise"`` raises :class:`InfeasibleProbeError`;
    ``on_infeasible="ceiling"`` returns the unconditional bound ``H(X)``.

    The per-gap sum can exceed ``H(X)`` when probes are sparse; the reported
    value is capped at ``H(X)`` and the uncapped sum kept as
    ``components["gap_sum"]``.
    """
    _check_rates(lam, omega)
    h_x = binomial_entropy(T, lam)
    params = {"lambda": lam, "omega": omega, "T": T, "method": method}
    try:
        type2_rate(T, omega)
    except InfeasibleProbeError:
        if on_infeasible == "ceiling":
            return BoundReport(h_x, {"H_X": h_x, "probe_feasible": False}, params)
        raise
    method = method.lower().replace("-", "").replace("_", "")
    if method == "exact":
        return _fcfs_bound_exact(lam, omega, T, tol, h_x, params)
    if method == "montecarlo":
        return _fcfs_bound_mc(lam, omega, T, samples, seed, h_x, params)
    raise ParameterError(f"unknown method {method!r}")


def _check_rates(lam, omega):
    if not (0.0 <= lam <= 1.0) or not (0.0 <= omega < 1.0):
        raise ParameterError("rates out of range")
    if lam + omega >= 1.0:
        raise ParameterError("lambda + omega must be < 1")


def _fcfs_bound_exact(lam, omega, T, tol, h_x, params):
    if T > EXACT_MAX_T:
        raise ParameterError(
            f"exact enumeration over 2^{T - 1} placements refused for T > {EXACT_MAX_T}; "
            "use method='montecarlo'"
        )
    pmf = stationary_clock_chain(ClockChainSpec(lam, omega, T, REAL), tol)
    pi = np.asarray(pmf.probs)
    rate = type2_rate(T, omega)
    total = 0.0
    exact_fraction = 0.0
    nonempty = 0.0
    probes = 0.0
    for interior, w in _placements(T, rate):
        ticks = (0, *interior, T)
        dist = pi.copy()
        alive = pi.copy()
        h = 0.0
        for tau in np.diff(ticks):
            nonempty += w * (1.0 - dist[0])
            probes += w
            h += _gap_entropy(dist, int(tau), lam)
            v = binomial_pmf(int(tau), lam)
            dist = _shift_reflect(dist, v, int(tau))
            alive = _shift_reflect(alive, v, int(tau))
            alive[0] = 0.0
        total += w * h
        exact_fraction += w * alive.sum()
    components = {
        "H_X": h_x,
        "probe_feasible": True,
        "exact_fraction": float(exact_fraction),
        "pr_probe_nonempty": float(nonempty / probes),
        "pr_tick_empty": float(pi[0]),
        "q_max": pmf.support_max,
        "stationary_residual": pmf.meta["residual"],
        "gap_sum": float(total),
    }
    return BoundReport(min(float(total), h_x), components, params)


def _fcfs_bound_mc(lam, omega, T, samples, seed, h_x, params):
    if samples < 1:
        raise ParameterError("samples must be positive")
    burn = max(samples // 10, 100)
    n = samples + burn
    probe = build_probe_schedule(T, omega, n, seed)
    user = bernoulli_arrivals(lam, probe.horizon_slots, seed + 1).indicators.copy()
    user[-1] = 0
    obs = observe_queue(probe, fcfs_run(SlotTrace(user), probe.to_slot_trace()))
    keep = obs.arrivals[:-1] >= burn * T
    q0, q1, tau = obs.queue[:-1][keep], obs.queue[1:][keep], obs.gaps[keep]
    csum = np.concatenate([[0], np.cumsum(user)])
    starts = obs.arrivals[:-1][keep]
    x = csum[starts + tau] - csum[starts]
    # plug-in H(X | tau, Q_i, Q_{i+1}) over all gaps, scaled to gaps per period
    cond = np.stack([tau, q0, q1], axis=1)
    joint = np.stack([tau, q0, q1, x], axis=1)
    h_cond = _plugin_entropy(joint) - _plugin_entropy(cond)
    value = h_cond * tau.size / samples
    components = {
        "H_X": h_x,
        "probe_feasible": True,
        "exact_fraction": float(np.mean(np.bincount(
            starts // T - burn, weights=(q1 == 0).astype(float), minlength=samples) == 0)),
        "pr_probe_nonempty": float(np.mean(q0 > 0)),
        "gap_sum": float(value),
        "samples": samples,
        "burn_in": burn,
        "seed": seed,
    }
    return BoundReport(min(float(value), h_x), components, params)


def _plugin_entropy(rows: np.ndarray) -> float:
    _, counts = np.unique(rows, axis=0, return_counts=True)
    return entropy_bits(counts / counts.sum())
