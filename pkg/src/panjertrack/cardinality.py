"""Panjer cardinality models.

The Panjer family is a two-parameter count family covering the negative
binomial (alpha, beta > 0), the binomial (alpha a negative integer with
beta < 0), and -- as the limit alpha, beta -> infinity at fixed ratio --
the Poisson distribution.  A Panjer count has mean alpha/beta and variance
(alpha/beta)(1 + 1/beta), so the family can model target populations whose
count is more or less dispersed than Poisson.

All pmf and rising-factorial arithmetic is done in signed log space:
filter recursions feed parameters like (alpha)_{j+u} / beta^{j+u} with
populations of 100+ targets, which overflow doubles in linear space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Union

import numpy as np
from scipy.special import gammaln

__all__ = [
    "Panjer",
    "PoissonLimit",
    "PanjerParams",
    "CardinalityStats",
    "SignedLog",
    "pochhammer_log",
    "pochhammer_log_table",
    "panjer_from_moments",
    "panjer_stats",
    "panjer_pmf",
    "panjer_log_pmf",
    "POISSON_REL_TOL",
]

# Relative tolerance for treating var ~ mean as the Poisson limit; avoids
# dividing by var - mean when converting moments to parameters.
POISSON_REL_TOL = 1e-9


class SignedLog(NamedTuple):
    """A real number stored as (sign, log magnitude); sign 0 means exact zero."""

    sign: float
    log: float

    def value(self) -> float:
        return self.sign * math.exp(self.log)


@dataclass(frozen=True)
class Panjer:
    """Panjer parameter pair.

    Valid parameterisations: alpha > 0 and beta > 0 (negative binomial), or
    alpha a negative integer and beta < 0 (binomial).  Anything else yields
    complex pmf values and is rejected.
    """

    alpha: float
    beta: float

    def __post_init__(self) -> None:
        a, b = self.alpha, self.beta
        if not (math.isfinite(a) and math.isfinite(b)):
            raise ValueError(f"Panjer parameters must be finite, got ({a}, {b})")
        negbin = a > 0 and b > 0
        binom = a < 0 and b < 0 and a == round(a)
        if not (negbin or binom):
            raise ValueError(
                f"invalid Panjer parameters ({a}, {b}): need alpha, beta > 0 "
                "or alpha a negative integer with beta < 0"
            )


@dataclass(frozen=True)
class PoissonLimit:
    """Poisson sentinel for the Panjer limit alpha, beta -> inf at rate = alpha/beta."""

    rate: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.rate) and self.rate >= 0.0):
            raise ValueError(f"Poisson rate must be finite and >= 0, got {self.rate}")


PanjerParams = Union[Panjer, PoissonLimit]


@dataclass(frozen=True)
class CardinalityStats:
    """First two moments of a target count."""

    mean: float
    var: float

    def __post_init__(self) -> None:
        if not (self.mean >= 0.0 and self.var >= 0.0):
            raise ValueError(f"moments must be >= 0, got ({self.mean}, {self.var})")


def pochhammer_log(zeta: float, n: int) -> SignedLog:
    """Rising factorial zeta (zeta+1) ... (zeta+n-1) as a signed log; order 0 is 1."""
    if n < 0:
        raise ValueError("pochhammer order must be >= 0")
    if n == 0:
        return SignedLog(1.0, 0.0)
    if zeta > 0.0:
        # All factors positive; gammaln is exact enough and O(1) for large n.
        return SignedLog(1.0, gammaln(zeta + n) - gammaln(zeta))
    factors = zeta + np.arange(n, dtype=float)
    if np.any(factors == 0.0):
        return SignedLog(0.0, -np.inf)
    sign = 1.0 if np.count_nonzero(factors < 0) % 2 == 0 else -1.0
    return SignedLog(sign, float(np.sum(np.log(np.abs(factors)))))


def pochhammer_log_table(zeta: float, n_max: int) -> tuple[np.ndarray, np.ndarray]:
    """Signed logs of the rising factorials (zeta)_0 .. (zeta)_{n_max}."""
    signs = np.ones(n_max + 1)
    logs = np.zeros(n_max + 1)
    if n_max == 0:
        return signs, logs
    factors = zeta + np.arange(n_max, dtype=float)
    with np.errstate(divide="ignore"):
        logs[1:] = np.cumsum(np.log(np.abs(factors)))
    sign_flips = np.cumsum(factors < 0) % 2
    signs[1:] = np.where(sign_flips == 1, -1.0, 1.0)
    zero_from = np.nonzero(factors == 0.0)[0]
    if zero_from.size:
        signs[zero_from[0] + 1 :] = 0.0
        logs[zero_from[0] + 1 :] = -np.inf
    return signs, logs


def panjer_from_moments(
    stats: CardinalityStats,
    underdispersed: str = "clamp",
    poisson_rel_tol: float = POISSON_REL_TOL,
) -> PanjerParams:
    """Parameters of the Panjer count matching the given mean and variance.

    mean > 0 is required.  var ~ mean (within ``poisson_rel_tol`` relative)
    returns the Poisson sentinel.  var < mean would need a negative-integer
    alpha, which generically does not exist; the ``underdispersed`` policy is
    either "clamp" (Poisson at the mean, the default) or "binomial" (round
    alpha to the nearest negative integer).
    """
    mean, var = stats.mean, stats.var
    if mean <= 0.0:
        raise ValueError(f"cannot fit a Panjer count to mean {mean} <= 0 (empty process)")
    if abs(var - mean) <= poisson_rel_tol * mean:
        return PoissonLimit(mean)
    if var > mean:
        spread = var - mean
        return Panjer(alpha=mean * mean / spread, beta=mean / spread)
    if underdispersed == "clamp":
        return PoissonLimit(mean)
    if underdispersed == "binomial":
        alpha = round(mean * mean / (var - mean))
        alpha = min(alpha, -1.0)
        return Panjer(alpha=float(alpha), beta=float(alpha) / mean)
    raise ValueError(f"unknown underdispersed policy {underdispersed!r}")


def panjer_stats(params: PanjerParams) -> CardinalityStats:
    """Mean and variance of a Panjer count: (alpha/beta, (alpha/beta)(1 + 1/beta))."""
    if isinstance(params, PoissonLimit):
        return CardinalityStats(params.rate, params.rate)
    mean = params.alpha / params.beta
    return CardinalityStats(mean, mean * (1.0 + 1.0 / params.beta))


def panjer_log_pmf(params: PanjerParams, n) -> np.ndarray | float:
    """Log pmf at count(s) n, computed in log space.

    Panjer pmf: binom(-alpha, n) (1 + 1/beta)^(-alpha) (-1/(beta+1))^n, which
    is (alpha)_n / n! * (1 + 1/beta)^(-alpha) * (beta+1)^(-n) with all sign
    factors cancelling on the valid parameter domain.
    """
    n_arr = np.atleast_1d(np.asarray(n, dtype=float))
    if np.any(n_arr < 0) or np.any(n_arr != np.floor(n_arr)):
        raise ValueError("counts must be nonnegative integers")
    out = np.full(n_arr.shape, -np.inf)
    if isinstance(params, PoissonLimit):
        lam = params.rate
        if lam == 0.0:
            out[n_arr == 0] = 0.0
        else:
            out = n_arr * math.log(lam) - lam - gammaln(n_arr + 1.0)
    else:
        a, b = params.alpha, params.beta
        n_max = int(n_arr.max(initial=0))
        signs, logs = pochhammer_log_table(a, n_max)
        idx = n_arr.astype(int)
        log_unsigned = (
            logs[idx]
            - gammaln(n_arr + 1.0)
            - a * math.log1p(1.0 / b)
            - n_arr * math.log(abs(b + 1.0))
        )
        # Sign of (alpha)_n and of (beta+1)^(-n) cancel pairwise on the
        # binomial branch; terms with sign 0 are genuine zeros (n > -alpha).
        total_sign = signs[idx] * np.where(b + 1.0 < 0, (-1.0) ** n_arr, 1.0)
        out = np.where(total_sign > 0, log_unsigned, -np.inf)
    if np.isscalar(n) or np.asarray(n).ndim == 0:
        return float(out[0])
    return out


def panjer_pmf(params: PanjerParams, n) -> np.ndarray | float:
    """pmf at count(s) n; see panjer_log_pmf."""
    return np.exp(panjer_log_pmf(params, n))
