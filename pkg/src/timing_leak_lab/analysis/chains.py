"""Queue length at clock ticks as a Markov chain, solved numerically.

Two chains are modelled, both observed at the start of each clock period
before that slot's arrivals:

``real``
    The FCFS queue under the two-type probe attack, propagated slot by slot
    (Type-I job on the tick, user Bernoulli(lam) and Type-II Bernoulli(rate)
    on each interior slot, one service per nonempty slot).
``virtual``
    The batch proxy ``q' = (q + 1 + a + x - T)_+`` with ``a ~ B(T-1, rate)``
    and ``x ~ B(T, lam)``, i.e. all probes of a period released on the tick.

The infinite state space is truncated at ``q_max`` with the overflow lumped
into the top state; ``q_max`` doubles until the mass near the top is
negligible.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ..attacker import type2_rate
from ..errors import NumericalError, ParameterError, TruncationError
from .entropy import binomial_pmf

REAL = "real"
VIRTUAL = "virtual"


@dataclass(frozen=True, eq=False)
class Pmf:
    """Probability mass function on ``0..support_max``."""

    probs: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.ndim != 1 or p.size == 0:
            raise ParameterError("a Pmf needs a nonempty 1-D probability vector")
        if np.any(p < 0):
            raise ParameterError("probabilities must be nonnegative")
        if abs(p.sum() - 1.0) > 1e-12:
            raise ParameterError(f"probabilities sum to {p.sum()!r}, not 1")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    @property
    def support_max(self) -> int:
        return self.probs.size - 1

    def mean(self) -> float:
        return float(np.dot(np.arange(self.probs.size), self.probs))

    def ccdf(self, length: Optional[int] = None) -> np.ndarray:
        """``Pr(Q >= q)`` for ``q = 0..length-1``."""
        n = self.probs.size if length is None else length
        p = np.zeros(max(n, self.probs.size))
        p[: self.probs.size] = self.probs
        tail = np.cumsum(p[::-1])[::-1]
        return tail[:n]

    def to_json(self) -> str:
        return json.dumps(
            {"support_max": self.support_max, "probs": self.probs.tolist(), "meta": self.meta},
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "Pmf":
        d = json.loads(text)
        return cls(np.asarray(d["probs"], dtype=float), d.get("meta", {}))


@dataclass(frozen=True)
class ClockChainSpec:
    lam: float
    omega: float
    T: int
    variant: str = REAL
    q_max: Optional[int] = None

    def __post_init__(self):
        if not (0.0 <= self.lam <= 1.0):
            raise ParameterError("lambda must lie in [0, 1]")
        if self.lam + self.omega >= 1.0:
            raise ParameterError("the chain is only positive recurrent for lambda + omega < 1")
        if self.variant not in (REAL, VIRTUAL):
            raise ParameterError(f"unknown chain variant {self.variant!r}")
        type2_rate(self.T, self.omega)

    @property
    def rate(self) -> float:
        return type2_rate(self.T, self.omega)


def _arrival_increment_pmf(spec: ClockChainSpec) -> np.ndarray:
    """pmf of ``a + x`` on ``0..2T-1``."""
    return np.convolve(binomial_pmf(spec.T - 1, spec.rate), binomial_pmf(spec.T, spec.lam))


def _real_period_from(q0: int, spec: ClockChainSpec) -> np.ndarray:
    """Exact next-tick pmf of the real chain from ``q0``, slot by slot."""
    T, lam, rate = spec.T, spec.lam, spec.rate
    dist = np.zeros(q0 + 2 * T + 2)
    dist[q0] = 1.0
    user = np.array([1.0 - lam, lam])
    tick = np.array([0.0, 1.0 - lam, lam])  # Type-I job always present
    interior = np.convolve([1.0 - rate, rate], user)
    for j in range(T):
        dist = np.convolve(dist, tick if j == 0 else interior)[: dist.size]
        served = dist[1:].copy()
        served[0] += dist[0]
        dist = np.append(served, 0.0)
    return dist


def period_pmf(q: int, spec: ClockChainSpec) -> tuple[int, np.ndarray]:
    """Untruncated one-period transition law from ``q``.

    Returns ``(offset, probs)`` with ``Pr(q' = offset + j) = probs[j]``.
    """
    inc = _arrival_increment_pmf(spec)
    base = q + 1 - spec.T
    if spec.variant == REAL and q < spec.T - 1:
        return 0, _real_period_from(q, spec)
    if spec.variant == VIRTUAL and base < 0:
        probs = np.zeros(base + inc.size if base + inc.size > 0 else 1)
        for s, w in enumerate(inc):
            probs[max(base + s, 0)] += w
        return 0, probs
    return base, inc


def transition_matrix(spec: ClockChainSpec, q_max: int) -> sp.csr_matrix:
    """Row-stochastic kernel on ``0..q_max``; overflow lumped into ``q_max``."""
    inc = _arrival_increment_pmf(spec)
    n = q_max + 1
    q = np.arange(n)
    cols = q[:, None] + 1 - spec.T + np.arange(inc.size)
    np.clip(cols, 0, q_max, out=cols)
    vals = np.broadcast_to(inc, cols.shape)
    rows = np.broadcast_to(q[:, None], cols.shape)
    keep = np.ones(cols.shape, dtype=bool)
    if spec.variant == REAL:
        keep[: spec.T - 1] = False
    P = sp.coo_matrix((vals[keep], (rows[keep], cols[keep])), shape=(n, n)).tocsr()
    if spec.variant == REAL:
        extra_r, extra_c, extra_v = [], [], []
        for q0 in range(min(spec.T - 1, n)):
            probs = _real_period_from(q0, spec)
            idx = np.nonzero(probs)[0]
            extra_r.extend([q0] * idx.size)
            extra_c.extend(np.minimum(idx, q_max).tolist())
            extra_v.extend(probs[idx].tolist())
        P = P + sp.coo_matrix((extra_v, (extra_r, extra_c)), shape=(n, n)).tocsr()
    P.sum_duplicates()
    return P


def stationarity_residual(pi: np.ndarray, P: sp.spmatrix) -> float:
    """L1 norm of ``pi P - pi``."""
    return float(np.abs(P.T @ pi - pi).sum())


def _solve_direct(P: sp.csr_matrix) -> np.ndarray:
    # pin pi_0 = 1 in place of the first balance equation so the system stays
    # banded, factorise in natural order, then normalise
    n = P.shape[0]
    A = (P.T - sp.identity(n, format="csr")).tolil()
    A[0, :] = 0.0
    A[0, 0] = 1.0
    b = np.zeros(n)
    b[0] = 1.0
    pi = spla.spsolve(A.tocsc(), b, permc_spec="NATURAL")
    pi = np.where(pi < 0, 0.0, pi)
    return pi / pi.sum()


def _solve_power(P: sp.csr_matrix, tol: float, max_iter: int) -> np.ndarray:
    n = P.shape[0]
    pi = np.full(n, 1.0 / n)
    PT = P.T.tocsr()
    for _ in range(max_iter):
        nxt = PT @ pi
        nxt /= nxt.sum()
        if np.abs(nxt - pi).sum() < tol:
            return nxt
        pi = nxt
    raise NumericalError(
        "power iteration did not converge",
        {"iterations": max_iter, "last_change": float(np.abs(PT @ pi - pi).sum())},
    )


def stationary_clock_chain(
    spec: ClockChainSpec,
    tol: float = 1e-12,
    *,
    method: str = "direct",
    max_q: int = 1 << 17,
    max_iter: int = 200_000,
) -> Pmf:
    """Stationary law of the tick-observed queue length.

    ``method="direct"`` factorises the sparse banded kernel;
    ``method="power"`` iterates ``pi <- pi P`` and is only practical for
    lightly loaded chains. ``q_max`` is doubled until the mass on the top
    ``2T`` states falls below ``tol``.
    """
    q_max = spec.q_max or max(64, 8 * spec.T)
    while True:
        P = transition_matrix(spec, q_max)
        if method == "direct":
            pi = _solve_direct(P)
        elif method == "power":
            pi = _solve_power(P, tol, max_iter)
        else:
            raise ParameterError(f"unknown method {method!r}")
        tail = float(pi[-2 * spec.T :].sum())
        if tail < tol:
            break
        if spec.q_max is not None or q_max * 2 > max_q:
            raise TruncationError(
                f"tail mass {tail:.3e} at q_max={q_max} is not below {tol:g}",
                {"q_max": q_max, "tail_mass": tail},
            )
        q_max *= 2
    residual = stationarity_residual(pi, P)
    if not residual < max(tol, 1e-10):
        raise NumericalError(
            f"stationary residual {residual:.3e} too large",
            {"q_max": q_max, "residual": residual, "method": method},
        )
    meta = {
        "lambda": spec.lam,
        "omega": spec.omega,
        "T": spec.T,
        "variant": spec.variant,
        "q_max": q_max,
        "tail_mass": tail,
        "residual": residual,
        "method": method,
    }
    return Pmf(pi, meta)


def chain_residual(pmf: Pmf, spec: ClockChainSpec) -> float:
    """Residual of ``pmf`` under the truncated kernel of matching size."""
    return stationarity_residual(np.asarray(pmf.probs), transition_matrix(spec, pmf.support_max))


@dataclass(frozen=True)
class DriftRow:
    q: int
    drift: float
    bound: float
    satisfied: bool
    identity_error: Optional[float]


def lyapunov_drift_check(
    lam: float, omega: float, T: int, q_states: Iterable[int], variant: str = REAL
) -> list[DriftRow]:
    """One-period drift of ``V(q) = q`` against ``-eps + T * 1{q < T}``.

    ``eps = (1 - omega - lam) * T``. For ``q >= T - 1`` the drift must equal
    ``-eps``; ``identity_error`` is the absolute deviation there.
    """
    spec = ClockChainSpec(lam, omega, T, variant)
    eps = (1.0 - omega - lam) * T
    rows = []
    for q in q_states:
        q = int(q)
        if q < 0:
            raise ParameterError("queue states are nonnegative")
        offset, probs = period_pmf(q, spec)
        drift = float(np.dot(offset - q + np.arange(probs.size), probs))
        bound = -eps + (T if q < T else 0)
        err = abs(drift + eps) if q >= T - 1 else None
        ok = drift <= bound + 1e-12 and drift <= T + 1e-12
        rows.append(DriftRow(q, drift, bound, ok, err))
    return rows


def check_z_identity(p: Pmf, lam: float, omega: float, T: int) -> float:
    """Residual of the z-transform identity at ``z = 1`` for the virtual chain.

    ``sum_{k<=T-2} p_k sum_{r,o: k+r+o<=T-2} u_r v_o (T-1-k-r-o) = T (1-omega-lam)``.
    """
    if T < 2:
        raise ParameterError("the identity has an empty left side for T = 1")
    u = binomial_pmf(T - 1, type2_rate(T, omega))
    v = binomial_pmf(T, lam)
    probs = np.asarray(p.probs)
    lhs = 0.0
    for k in range(min(T - 1, probs.size)):
        inner = 0.0
        for r in range(T - 1 - k):
            for o in range(T - 1 - k - r):
                inner += u[r] * v[o] * (T - 1 - (k + r + o))
        lhs += probs[k] * inner
    return abs(lhs - T * (1.0 - omega - lam))


def virtual_tail_bound(lam: float, omega: float, T: int) -> float:
    """Closed-form upper bound on ``Pr(Q_hat <= T-2)`` for the virtual chain."""
    if T < 2:
        raise ParameterError("bound defined for T >= 2")
    num = (T - 1) ** (T - 1) * (1.0 - omega - lam)
    den = T ** (T - 2) * (1.0 - omega) ** (T - 1) * (1.0 - lam) ** T
    return num / den


def tail_bound_slack(p: Pmf, lam: float, omega: float, T: int) -> float:
    """``virtual_tail_bound - sum_{k<=T-2} p_k``; nonnegative when the bound holds."""
    return virtual_tail_bound(lam, omega, T) - float(np.asarray(p.probs)[: T - 1].sum())


def dominance_gap(p_real: Pmf, p_virtual: Pmf) -> float:
    """``min_q Pr(Q >= q) - Pr(Q_hat >= q)`` over the common support."""
    n = max(p_real.probs.size, p_virtual.probs.size)
    return float(np.min(p_real.ccdf(n) - p_virtual.ccdf(n)))


def check_dominance(p_real: Pmf, p_virtual: Pmf, tol: float = 1e-9) -> bool:
    """True iff the real CCDF is pointwise at least the virtual CCDF (within ``tol``)."""
    return dominance_gap(p_real, p_virtual) >= -tol
