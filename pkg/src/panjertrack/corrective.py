"""Elementary symmetric functions and the corrective terms of the update step.

The data update of the second-order filter weighs missed-detection and
per-measurement intensity terms with ratios of sums

    Upsilon_u(Z) = sum_j  T(j+u) * C(|Z|-j) * e_j(Z),

where e_j is the j-th elementary symmetric function of the per-measurement
ratios t_z, T(r) collects the predicted-process factors and C(r) the clutter
factors.  The ratios l1/l2 of these sums over reduced measurement subsets
drive both the intensity update and all second-order (variance/covariance)
statistics.

Everything here runs in signed log space: T and C grow like (alpha)_r / b^r
and overflow doubles for populations beyond ~100 targets, and the e_j of
likelihood ratios span hundreds of orders of magnitude.

The same machinery serves the CPHD baseline: the engine only sees the two
factor tables, so an i.i.d.-cluster filter plugs in its cardinality-averaged
factors and reuses every table and quadratic form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.special import logsumexp

from .cardinality import (
    Panjer,
    PanjerParams,
    PoissonLimit,
    SignedLog,
    pochhammer_log_table,
)

__all__ = [
    "MeasurementTermTable",
    "CorrectiveTerms",
    "esf_vieta",
    "upsilon",
    "corrective_terms",
    "poisson_corrective_terms",
    "updated_mass",
    "updated_covariance",
]


def esf_vieta(values, up_to: int | None = None) -> np.ndarray:
    """Elementary symmetric functions e_0..e_up_to by polynomial expansion.

    Expands prod_i (x - v_i), reads the coefficients off and corrects the
    alternating signs, so e_j equals the sum over all j-subsets of products.
    Runs in plain float arithmetic; the filter-scale log-space variants live
    below.
    """
    vals = np.asarray(values, dtype=float)
    m = vals.size
    if up_to is None:
        up_to = m
    if up_to > m:
        raise ValueError(f"requested e_0..e_{up_to} from only {m} values")
    coeffs = np.zeros(m + 1)
    coeffs[0] = 1.0
    for k, v in enumerate(vals):
        # multiply running polynomial by (x - v); coeffs[j] holds x^(deg-j)
        coeffs[1 : k + 2] -= v * coeffs[0 : k + 1].copy()
    signs = (-1.0) ** np.arange(m + 1)
    return (signs * coeffs)[: up_to + 1]


def _log_esf(log_t: np.ndarray) -> np.ndarray:
    """log e_j for j = 0..m of nonnegative values given by their logs."""
    m = log_t.size
    out = np.full(m + 1, -np.inf)
    out[0] = 0.0
    for k in range(m):
        out[1 : k + 2] = np.logaddexp(out[1 : k + 2], log_t[k] + out[0 : k + 1])
    return out


def _log_esf_drop_one(log_t: np.ndarray) -> np.ndarray:
    """Row z holds log e_j(Z minus z), j = 0..m-1.

    All rows share the same insertion schedule; row z skips its own element
    by a save/restore around the vectorised convolution step.
    """
    m = log_t.size
    table = np.full((m, max(m, 1)), -np.inf)
    table[:, 0] = 0.0
    for k in range(m):
        saved = table[k].copy()
        table[:, 1:] = np.logaddexp(table[:, 1:], log_t[k] + table[:, :-1])
        table[k] = saved
    return table


def _log_esf_drop_pairs(log_t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """log e_j(Z minus {z, z'}) for all unordered pairs.

    Returns (table, row_of) where table[row_of[i, k]] holds the coefficients
    for the pair {i, k}.  O(m^2) rows of length m-1; only built on demand.
    """
    m = log_t.size
    ii, kk = np.triu_indices(m, k=1)
    n_pairs = ii.size
    width = max(m - 1, 1)
    table = np.full((n_pairs, width), -np.inf)
    table[:, 0] = 0.0
    row_of = np.full((m, m), -1, dtype=int)
    row_of[ii, kk] = np.arange(n_pairs)
    row_of[kk, ii] = np.arange(n_pairs)
    for j in range(m):
        rows = np.concatenate([row_of[j, :j], row_of[j, j + 1 :]])
        saved = table[rows].copy()
        table[:, 1:] = np.logaddexp(table[:, 1:], log_t[j] + table[:, :-1])
        table[rows] = saved
    return table, row_of


def _mul_one_plus(coeffs: np.ndarray, log_t: float) -> np.ndarray:
    """Log-space multiply of a nonnegative polynomial by (1 + t x)."""
    out = coeffs.copy()
    out[1:] = np.logaddexp(coeffs[1:], log_t + coeffs[:-1])
    return out


def _signed_sum(logs: np.ndarray, signs: np.ndarray) -> SignedLog:
    if logs.size == 0 or np.all(np.isneginf(logs)):
        return SignedLog(0.0, -np.inf)
    res, sgn = logsumexp(logs, b=signs, return_sign=True)
    return SignedLog(float(sgn), float(res))


@dataclass(frozen=True)
class MeasurementTermTable:
    """Per-update scalar inputs to the corrective terms.

    ratios[z] is the measurement mass over the clutter spatial density,
    mu^z(X) / s_c(z); adjusted_mass is the predicted mass weighted by
    (1 + p_d/beta) (reduces to the predicted mass in the Poisson limit);
    missed_mass is the expected number of missed detections mu^phi(X).
    """

    ratios: np.ndarray
    adjusted_mass: float
    missed_mass: float

    def __post_init__(self) -> None:
        r = np.asarray(self.ratios, dtype=float)
        object.__setattr__(self, "ratios", r)
        if r.ndim != 1 or np.any(r < 0) or not np.all(np.isfinite(r)):
            raise ValueError("measurement ratios must be finite and >= 0")
        if self.missed_mass < 0:
            raise ValueError("missed-detection mass must be >= 0")


def _target_factors(
    target: PanjerParams, adjusted_mass: float, n_max: int
) -> tuple[np.ndarray, np.ndarray]:
    """Signs/logs of T(r) = (alpha)_r / (beta * F)^r for r = 0..n_max.

    In the Poisson limit the factor tends to 1 for every order, which is why
    that branch ignores both the rate and the adjusted mass.
    """
    if isinstance(target, PoissonLimit):
        return np.ones(n_max + 1), np.zeros(n_max + 1)
    if not adjusted_mass > 0.0:
        raise ValueError(
            f"adjusted predicted mass must be > 0, got {adjusted_mass} "
            "(invalid beta or empty predicted intensity)"
        )
    signs, logs = pochhammer_log_table(target.alpha, n_max)
    r = np.arange(n_max + 1, dtype=float)
    logs = logs - r * (math.log(abs(target.beta)) + math.log(adjusted_mass))
    if target.beta < 0:
        signs = signs * (-1.0) ** r
    return signs, logs


def _clutter_factors(clutter: PanjerParams, n_max: int) -> tuple[np.ndarray, np.ndarray]:
    """Signs/logs of C(r): (alpha_c)_r / (beta_c + 1)^r, or rate^r for Poisson."""
    r = np.arange(n_max + 1, dtype=float)
    if isinstance(clutter, PoissonLimit):
        if clutter.rate == 0.0:
            logs = np.full(n_max + 1, -np.inf)
            logs[0] = 0.0
            signs = np.zeros(n_max + 1)
            signs[0] = 1.0
            return signs, logs
        return np.ones(n_max + 1), r * math.log(clutter.rate)
    signs, logs = pochhammer_log_table(clutter.alpha, n_max)
    logs = logs - r * math.log(abs(clutter.beta + 1.0))
    if clutter.beta + 1.0 < 0:
        signs = signs * (-1.0) ** r
    return signs, logs


def upsilon(
    u: int,
    terms: MeasurementTermTable,
    target: PanjerParams,
    clutter: PanjerParams,
) -> SignedLog:
    """Signed-log Upsilon_u over the measurement subset held by ``terms``."""
    if u < 0:
        raise ValueError("order u must be >= 0")
    t = terms.ratios
    m = t.size
    t_signs, t_logs = _target_factors(target, terms.adjusted_mass, m + u)
    c_signs, c_logs = _clutter_factors(clutter, m)
    with np.errstate(divide="ignore"):
        log_e = _log_esf(np.log(t))
    j = np.arange(m + 1)
    logs = t_logs[j + u] + c_logs[m - j] + log_e
    signs = t_signs[j + u] * c_signs[m - j]
    return _signed_sum(logs, signs)


class CorrectiveTerms:
    """The l-ratios driving an update: scalars for the missed-detection part,
    per-measurement vectors, and the pair table for distinct measurements.

    l2_distinct is O(|Z|^2) rows of elementary symmetric functions and is
    materialised lazily; regional statistics avoid it entirely through
    pair_quadratic, an O(|Z|^2) contraction.
    """

    def __init__(
        self,
        l1_phi: float,
        l2_phi: float,
        l1: np.ndarray,
        l2: np.ndarray,
        log_t: np.ndarray | None = None,
        target_factors: tuple[np.ndarray, np.ndarray] | None = None,
        clutter_factors: tuple[np.ndarray, np.ndarray] | None = None,
        log_ups0: SignedLog | None = None,
        poisson_l1: np.ndarray | None = None,
    ):
        self.l1_phi = float(l1_phi)
        self.l2_phi = float(l2_phi)
        self.l1 = np.asarray(l1, dtype=float)
        self.l2 = np.asarray(l2, dtype=float)
        self._log_t = log_t
        self._t_factors = target_factors
        self._c_factors = clutter_factors
        self._log_ups0 = log_ups0
        self._poisson_l1 = poisson_l1

    def __len__(self) -> int:
        return self.l1.size

    @cached_property
    def l2_distinct(self) -> np.ndarray:
        """Matrix of l2 over pairs of distinct measurements; zero diagonal."""
        m = len(self)
        out = np.zeros((m, m))
        if m < 2:
            return out
        if self._poisson_l1 is not None:
            out = np.outer(self._poisson_l1, self._poisson_l1)
            np.fill_diagonal(out, 0.0)
            return out
        table, row_of = _log_esf_drop_pairs(self._log_t)
        t_signs, t_logs = self._t_factors
        c_signs, c_logs = self._c_factors
        j = np.arange(m - 1)
        logs = t_logs[j + 2][None, :] + c_logs[m - 2 - j][None, :] + table
        signs = (t_signs[j + 2] * c_signs[m - 2 - j])[None, :] * np.ones_like(table)
        res, sgn = logsumexp(logs, b=signs, axis=1, return_sign=True)
        vals = sgn * np.exp(res - self._log_ups0.log) * self._log_ups0.sign
        ii, kk = np.triu_indices(m, k=1)
        out[ii, kk] = vals[row_of[ii, kk]]
        out[kk, ii] = vals[row_of[kk, ii]]
        return out

    def pair_quadratic(self, r: np.ndarray, r_other: np.ndarray) -> float:
        """sum over z != z' of r[z] * r_other[z'] * l2_distinct[z, z'].

        Evaluated without the pair table: a single sweep maintains the
        log-space polynomials P = prod (1 + t x), the r- and r'-weighted
        leave-one-out sums, and the leave-two-out pair sum.
        """
        m = len(self)
        r = np.asarray(r, dtype=float)
        r_other = np.asarray(r_other, dtype=float)
        if r.shape != (m,) or r_other.shape != (m,):
            raise ValueError("region mass vectors must match the measurement count")
        if m < 2:
            return 0.0
        if self._poisson_l1 is not None:
            a = r * self._poisson_l1
            b = r_other * self._poisson_l1
            return float(a.sum() * b.sum() - a @ b)
        with np.errstate(divide="ignore"):
            log_r = np.log(r)
            log_rp = np.log(r_other)
        lt = self._log_t
        size = m + 1
        poly = np.full(size, -np.inf)
        poly[0] = 0.0
        one_r = np.full(size, -np.inf)
        one_rp = np.full(size, -np.inf)
        pair = np.full(size, -np.inf)
        for k in range(m):
            new_pair = np.logaddexp(
                _mul_one_plus(pair, lt[k]),
                np.logaddexp(log_r[k] + one_rp, log_rp[k] + one_r),
            )
            one_r = np.logaddexp(_mul_one_plus(one_r, lt[k]), log_r[k] + poly)
            one_rp = np.logaddexp(_mul_one_plus(one_rp, lt[k]), log_rp[k] + poly)
            poly = _mul_one_plus(poly, lt[k])
            pair = new_pair
        t_signs, t_logs = self._t_factors
        c_signs, c_logs = self._c_factors
        j = np.arange(m - 1)
        num = _signed_sum(
            t_logs[j + 2] + c_logs[m - 2 - j] + pair[: m - 1],
            t_signs[j + 2] * c_signs[m - 2 - j],
        )
        return num.sign * self._log_ups0.sign * math.exp(num.log - self._log_ups0.log)


def corrective_terms(
    table: MeasurementTermTable,
    target: PanjerParams,
    clutter: PanjerParams,
) -> CorrectiveTerms:
    """All corrective terms for one update from the measurement table."""
    t = table.ratios
    m = t.size
    with np.errstate(divide="ignore"):
        log_t = np.log(t)
    t_factors = _target_factors(target, table.adjusted_mass, m + 2)
    c_factors = _clutter_factors(clutter, m)
    return _terms_from_factors(log_t, t_factors, c_factors)


def _terms_from_factors(
    log_t: np.ndarray,
    t_factors: tuple[np.ndarray, np.ndarray],
    c_factors: tuple[np.ndarray, np.ndarray],
) -> CorrectiveTerms:
    """Engine shared by the Panjer filter and the CPHD baseline.

    The caller provides the order-indexed factor tables; everything else
    (full-set and leave-one-out elementary symmetric functions, the ratios)
    is generic.
    """
    m = log_t.size
    t_signs, t_logs = t_factors
    c_signs, c_logs = c_factors
    log_e = _log_esf(log_t)
    j = np.arange(m + 1)

    def full_sum(u: int) -> SignedLog:
        return _signed_sum(
            t_logs[j + u] + c_logs[m - j] + log_e,
            t_signs[j + u] * c_signs[m - j],
        )

    ups0 = full_sum(0)
    if ups0.sign <= 0:
        raise ValueError("normalising sum Upsilon_0 is not positive; update undefined")
    ups1 = full_sum(1)
    ups2 = full_sum(2)
    l1_phi = ups1.sign * ups0.sign * math.exp(ups1.log - ups0.log)
    l2_phi = ups2.sign * ups0.sign * math.exp(ups2.log - ups0.log)

    if m > 0:
        drop_one = _log_esf_drop_one(log_t)
        jj = np.arange(m)
        reduced = np.empty((2, m))
        for u in (1, 2):
            logs = t_logs[jj + u][None, :] + c_logs[m - 1 - jj][None, :] + drop_one
            signs = (t_signs[jj + u] * c_signs[m - 1 - jj])[None, :] * np.ones_like(drop_one)
            res, sgn = logsumexp(logs, b=signs, axis=1, return_sign=True)
            reduced[u - 1] = sgn * ups0.sign * np.exp(res - ups0.log)
        l1, l2 = reduced[0], reduced[1]
    else:
        l1 = np.zeros(0)
        l2 = np.zeros(0)

    return CorrectiveTerms(
        l1_phi,
        l2_phi,
        l1,
        l2,
        log_t=log_t,
        target_factors=t_factors,
        clutter_factors=c_factors,
        log_ups0=ups0,
    )


def poisson_corrective_terms(ratios: np.ndarray, clutter_rate: float) -> CorrectiveTerms:
    """Closed-form corrective terms of the Poisson (classic PHD) update.

    With both the predicted process and the clutter Poisson, every Upsilon
    collapses to prod_z (rate + t_z), so the l-ratios lose their order
    dependence: l1_phi = l2_phi = 1, l1 = l2 = 1/(rate + t), and the pair
    table factorises.
    """
    t = np.asarray(ratios, dtype=float)
    denom = clutter_rate + t
    if np.any(denom <= 0.0):
        raise ValueError("clutter rate plus measurement ratio must be positive")
    l1 = 1.0 / denom
    return CorrectiveTerms(1.0, 1.0, l1, l1.copy(), poisson_l1=l1)


def updated_mass(
    missed_mass: float, ratio_masses: np.ndarray, terms: CorrectiveTerms
) -> float:
    """Updated expected count over a region from its missed/detection masses."""
    return missed_mass * terms.l1_phi + float(np.dot(ratio_masses, terms.l1))


def updated_covariance(
    intersection_mass: float,
    missed_b: float,
    missed_bp: float,
    ratios_b: np.ndarray,
    ratios_bp: np.ndarray,
    terms: CorrectiveTerms,
) -> float:
    """Covariance of the updated counts in two regions.

    Inputs are the updated mean on the intersection, the missed-detection
    masses mu^phi(B), and the per-measurement masses mu^z(B)/s_c(z) for each
    region.  The variance is the special case B = B'.
    """
    mixed = float(
        np.dot(missed_b * ratios_bp + missed_bp * ratios_b, terms.l2 - terms.l1_phi * terms.l1)
    )
    cross = terms.pair_quadratic(ratios_b, ratios_bp) - float(
        np.dot(ratios_b, terms.l1) * np.dot(ratios_bp, terms.l1)
    )
    return (
        intersection_mass
        + missed_b * missed_bp * (terms.l2_phi - terms.l1_phi**2)
        + mixed
        + cross
    )
