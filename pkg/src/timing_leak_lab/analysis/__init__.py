"""Markov-chain solvers, entropy estimators and privacy bounds."""

from .bounds import BoundReport, acc_lower_bound, fcfs_upper_bound, tdma_privacy
from .chains import (
    REAL,
    VIRTUAL,
    ClockChainSpec,
    DriftRow,
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
from .entropy import binomial_entropy, binomial_pmf, entropy_bits
from .equivocation import (
    MCEstimate,
    boundary_probe_equivocation,
    equivocation_exact,
    equivocation_mc,
)

__all__ = [
    "BoundReport",
    "ClockChainSpec",
    "DriftRow",
    "MCEstimate",
    "Pmf",
    "REAL",
    "VIRTUAL",
    "acc_lower_bound",
    "binomial_entropy",
    "binomial_pmf",
    "boundary_probe_equivocation",
    "chain_residual",
    "check_dominance",
    "check_z_identity",
    "dominance_gap",
    "entropy_bits",
    "equivocation_exact",
    "equivocation_mc",
    "fcfs_upper_bound",
    "lyapunov_drift_check",
    "stationary_clock_chain",
    "tail_bound_slack",
    "tdma_privacy",
    "transition_matrix",
    "virtual_tail_bound",
]
