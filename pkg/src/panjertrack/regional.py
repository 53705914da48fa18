"""Regional second-order statistics of the estimated target count.

Mean, variance, covariance, and correlation of the number of targets inside
axis-aligned boxes, evaluated from an UpdateAudit after the fact.  The same
structural expression serves all three filters; only the corrective terms
stored in the audit differ.  For the classic PHD filter the Poisson limit
terms make every cross term with the missed-detection part vanish and the
covariance of the counts in two regions reduces to

    cov(B, B') = mean(B intersect B') - sum_z mu^z(B) mu^z(B') / denom_z^2,

which is zero for disjoint regions whose measurement masses do not overlap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .corrective import updated_covariance, updated_mass
from .filters import UpdateAudit

__all__ = [
    "Region",
    "RegionalReport",
    "regional_mean",
    "regional_variance",
    "covariance",
    "correlation",
    "pair_report",
]


@dataclass(frozen=True)
class Region:
    """Axis-aligned box in position coordinates; bounds may be infinite."""

    bounds: tuple

    def __post_init__(self) -> None:
        b = np.asarray(self.bounds, dtype=float).reshape(2, 2)
        if not np.all(b[:, 0] < b[:, 1]):
            raise ValueError(f"region bounds must satisfy lower < upper, got {b}")
        object.__setattr__(self, "bounds", ((b[0, 0], b[0, 1]), (b[1, 0], b[1, 1])))

    @classmethod
    def box(cls, x_lo, x_hi, y_lo, y_hi) -> "Region":
        return cls(((x_lo, x_hi), (y_lo, y_hi)))

    @classmethod
    def whole_plane(cls) -> "Region":
        return cls(((-np.inf, np.inf), (-np.inf, np.inf)))

    def intersect(self, other: "Region"):
        """Intersection box, or None when the regions are disjoint."""
        a = np.asarray(self.bounds)
        b = np.asarray(other.bounds)
        lo = np.maximum(a[:, 0], b[:, 0])
        hi = np.minimum(a[:, 1], b[:, 1])
        if np.any(lo >= hi):
            return None
        return Region(((lo[0], hi[0]), (lo[1], hi[1])))


@dataclass(frozen=True)
class RegionalReport:
    """Count statistics for a region pair: moments of B plus cov/corr with B'."""

    mean: float
    variance: float
    covariance: float
    correlation: float


def _require_kind(audit: UpdateAudit, filter_kind: str) -> None:
    if filter_kind != audit.kind:
        raise ValueError(
            f"audit was produced by the {audit.kind!r} filter, not {filter_kind!r}"
        )


def regional_mean(audit: UpdateAudit, region: Region) -> float:
    """Expected number of targets inside the region after the update."""
    return updated_mass(
        audit.missed_mass_in(region.bounds),
        audit.ratio_masses_in(region.bounds),
        audit.terms,
    )


def covariance(audit: UpdateAudit, b: Region, b_other: Region, filter_kind: str) -> float:
    """Covariance of the updated target counts in two regions."""
    _require_kind(audit, filter_kind)
    inter = b.intersect(b_other)
    inter_mean = 0.0 if inter is None else regional_mean(audit, inter)
    return updated_covariance(
        inter_mean,
        audit.missed_mass_in(b.bounds),
        audit.missed_mass_in(b_other.bounds),
        audit.ratio_masses_in(b.bounds),
        audit.ratio_masses_in(b_other.bounds),
        audit.terms,
    )


def regional_variance(audit: UpdateAudit, region: Region) -> float:
    """Variance of the updated count in the region; tiny negatives clamp to 0."""
    raw = covariance(audit, region, region, audit.kind)
    return max(raw, 0.0)


def correlation(audit: UpdateAudit, b: Region, b_other: Region, filter_kind: str) -> float:
    """Correlation of the counts in two regions; NaN when either variance is 0."""
    _require_kind(audit, filter_kind)
    var_b = regional_variance(audit, b)
    var_bp = regional_variance(audit, b_other)
    if var_b <= 0.0 or var_bp <= 0.0:
        return math.nan
    return covariance(audit, b, b_other, filter_kind) / math.sqrt(var_b * var_bp)


def pair_report(audit: UpdateAudit, b: Region, b_other: Region, filter_kind: str) -> RegionalReport:
    """Mean/variance of B plus covariance/correlation with B'."""
    return RegionalReport(
        mean=regional_mean(audit, b),
        variance=regional_variance(audit, b),
        covariance=covariance(audit, b, b_other, filter_kind),
        correlation=correlation(audit, b, b_other, filter_kind),
    )
