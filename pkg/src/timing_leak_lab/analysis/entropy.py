"""Shannon entropies in bits."""

from __future__ import annotations

import numpy as np
from scipy.special import gammaln, xlogy

from ..errors import ParameterError

LN2 = np.log(2.0)


def entropy_bits(probs) -> float:
    """Entropy of a probability vector; zero entries contribute nothing."""
    p = np.asarray(probs, dtype=float)
    return float(-xlogy(p, p).sum() / LN2)


def binomial_logpmf(n: int, p: float) -> np.ndarray:
    """Natural-log pmf of B(n, p) on ``0..n``; ``-inf`` where the mass is zero."""
    if n < 0:
        raise ParameterError("n must be nonnegative")
    if not (0.0 <= p <= 1.0):
        raise ParameterError(f"p must lie in [0, 1], got {p!r}")
    k = np.arange(n + 1)
    logc = gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = logc + xlogy(k, p) + xlogy(n - k, 1.0 - p)
    if p == 0.0:
        out = np.where(k == 0, 0.0, -np.inf)
    elif p == 1.0:
        out = np.where(k == n, 0.0, -np.inf)
    return out


def binomial_pmf(n: int, p: float) -> np.ndarray:
    return np.exp(binomial_logpmf(n, p))


def binomial_entropy(n: int, p: float) -> float:
    """Exact entropy of B(n, p) in bits, summed in the log domain."""
    logp = binomial_logpmf(n, p)
    finite = np.isfinite(logp)
    return float(-(np.exp(logp[finite]) * logp[finite]).sum() / LN2)


def binomial_entropy_approx(n: int, p: float) -> float:
    """Leading-order Gaussian approximation 0.5*log2(2*pi*e*n*p*(1-p))."""
    return 0.5 * float(np.log2(2 * np.pi * np.e * n * p * (1 - p)))


def conditional_entropy_from_joint(joint) -> float:
    """H(X | Y) in bits for a joint table indexed ``[y, x]``."""
    j = np.asarray(joint, dtype=float)
    py = j.sum(axis=1)
    return float(entropy_bits(j.ravel()) - entropy_bits(py))
