"""Gaussian mixture machinery for the linear-Gaussian filters.

Mixtures are stored struct-of-arrays (weights, means, covariances) so that
prediction, likelihood evaluation and reduction vectorise over components.
A mixture carries an intensity, not a probability density: its total mass is
the expected number of targets, and need not be one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import ndtr

__all__ = [
    "GaussianComponent",
    "GaussianMixture",
    "LinearGaussianModel",
    "mixture_predict",
    "kalman_terms",
    "prune_merge",
    "region_mass",
    "extract_states",
]

COV_JITTER = 1e-9
# integration window in standard deviations; the discarded tail is ~1e-17
_RANGE_SIGMAS = 8.5
_GL_NODES, _GL_WEIGHTS = leggauss(32)


@dataclass(frozen=True)
class GaussianComponent:
    weight: float
    mean: np.ndarray
    cov: np.ndarray


class GaussianMixture:
    """Weighted Gaussian components backed by stacked arrays."""

    def __init__(self, weights, means, covs):
        self.w = np.asarray(weights, dtype=float).reshape(-1)
        n = self.w.size
        means = np.asarray(means, dtype=float)
        d = means.shape[-1] if means.size or means.ndim > 1 else 0
        self.m = means.reshape(n, d)
        self.P = np.asarray(covs, dtype=float).reshape(n, d, d)
        if np.any(self.w < 0):
            raise ValueError("component weights must be >= 0")

    @classmethod
    def empty(cls, dim: int) -> "GaussianMixture":
        return cls(np.zeros(0), np.zeros((0, dim)), np.zeros((0, dim, dim)))

    @classmethod
    def from_components(cls, components) -> "GaussianMixture":
        comps = list(components)
        if not comps:
            raise ValueError("use GaussianMixture.empty for a dimensioned empty mixture")
        return cls(
            [c.weight for c in comps],
            np.stack([c.mean for c in comps]),
            np.stack([c.cov for c in comps]),
        )

    def __len__(self) -> int:
        return self.w.size

    def __iter__(self):
        for i in range(len(self)):
            yield GaussianComponent(self.w[i], self.m[i], self.P[i])

    @property
    def dim(self) -> int:
        return self.m.shape[1]

    def mass(self) -> float:
        return float(self.w.sum())

    def scaled(self, factor: float) -> "GaussianMixture":
        return GaussianMixture(self.w * factor, self.m, self.P)

    def concat(self, other: "GaussianMixture") -> "GaussianMixture":
        if len(self) == 0:
            return other
        if len(other) == 0:
            return self
        return GaussianMixture(
            np.concatenate([self.w, other.w]),
            np.concatenate([self.m, other.m]),
            np.concatenate([self.P, other.P]),
        )

    def region_mass(self, bounds) -> float:
        """Total mass inside an axis-aligned box over the position dimensions."""
        return float(_region_mass_batch(self.w, self.m, self.P, bounds).sum())


@dataclass(frozen=True)
class LinearGaussianModel:
    """Constant-matrix motion/observation model with uniform survival and detection."""

    f: np.ndarray
    q: np.ndarray
    h: np.ndarray
    r: np.ndarray
    p_survival: float
    p_detect: float

    def __post_init__(self) -> None:
        for name in ("p_survival", "p_detect"):
            v = getattr(self, name)
            if not np.isscalar(v) or isinstance(v, np.ndarray):
                raise ValueError(
                    f"{name} must be a uniform scalar; state-dependent "
                    "probabilities are not supported by this recursion"
                )
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        for name in ("q", "r"):
            mat = np.asarray(getattr(self, name), dtype=float)
            if not np.allclose(mat, mat.T):
                raise ValueError(f"{name} must be symmetric")
        object.__setattr__(self, "f", np.asarray(self.f, dtype=float))
        object.__setattr__(self, "q", np.asarray(self.q, dtype=float))
        object.__setattr__(self, "h", np.asarray(self.h, dtype=float))
        object.__setattr__(self, "r", np.asarray(self.r, dtype=float))


def _symmetrise(covs: np.ndarray) -> np.ndarray:
    covs = 0.5 * (covs + np.swapaxes(covs, -1, -2))
    d = covs.shape[-1]
    return covs + COV_JITTER * np.eye(d)


def mixture_predict(
    mix: GaussianMixture, model: LinearGaussianModel, births: GaussianMixture
) -> GaussianMixture:
    """Survival-thinned, motion-propagated mixture with births appended."""
    if len(mix) == 0:
        return births
    f = model.f
    w = model.p_survival * mix.w
    m = mix.m @ f.T
    p = _symmetrise(np.einsum("ij,njk,lk->nil", f, mix.P, f) + model.q)
    return GaussianMixture(w, m, p).concat(births)


def kalman_terms(
    comp: GaussianComponent, z: np.ndarray, model: LinearGaussianModel
) -> tuple[GaussianComponent, float]:
    """Measurement-updated component template and the likelihood N(z; Hm, S).

    The returned component keeps the prior weight; callers apply their own
    detection/corrective scaling.  The covariance uses the Joseph form so it
    stays positive definite under roundoff.
    """
    h, r = model.h, model.r
    z = np.asarray(z, dtype=float)
    s = h @ comp.cov @ h.T + r
    try:
        chol = np.linalg.cholesky(s)
    except np.linalg.LinAlgError as exc:
        raise ValueError(f"singular innovation covariance: {s}") from exc
    innovation = z - h @ comp.mean
    gain = comp.cov @ h.T @ np.linalg.inv(s)
    mean = comp.mean + gain @ innovation
    eye = np.eye(comp.cov.shape[0])
    j = eye - gain @ h
    cov = _symmetrise(j @ comp.cov @ j.T + gain @ r @ gain.T)
    white = np.linalg.solve(chol, innovation)
    log_det = 2.0 * np.log(np.diag(chol)).sum()
    loglik = -0.5 * (white @ white + log_det + z.size * np.log(2.0 * np.pi))
    return GaussianComponent(comp.weight, mean, cov), float(np.exp(loglik))


def prune_merge(
    mix: GaussianMixture,
    prune_threshold: float = 1e-5,
    merge_distance: float = 4.0,
    max_components: int = 300,
) -> GaussianMixture:
    """Standard mixture reduction: prune light components, merge close ones
    (Mahalanobis distance, moment-matched), cap the count at the heaviest.

    Pruned mass is dropped, not redistributed, so the output mass differs
    from the input by at most the pruned mass.
    """
    if prune_threshold < 0 or merge_distance < 0:
        raise ValueError("thresholds must be >= 0")
    keep = mix.w >= prune_threshold
    w, m, p = mix.w[keep], mix.m[keep], mix.P[keep]
    if w.size == 0:
        return GaussianMixture.empty(mix.dim)
    p_inv = np.linalg.inv(p)
    order = np.argsort(-w, kind="stable")
    alive = np.ones(w.size, dtype=bool)
    out_w, out_m, out_p = [], [], []
    dist_sq_cap = merge_distance * merge_distance
    for lead in order:
        if not alive[lead]:
            continue
        idx = np.nonzero(alive)[0]
        diff = m[idx] - m[lead]
        dist_sq = np.einsum("ni,nij,nj->n", diff, p_inv[idx], diff)
        cluster = idx[dist_sq <= dist_sq_cap]
        cw = w[cluster].sum()
        cm = (w[cluster, None] * m[cluster]).sum(axis=0) / cw
        spread = m[cluster] - cm
        cp = (
            w[cluster, None, None]
            * (p[cluster] + spread[:, :, None] * spread[:, None, :])
        ).sum(axis=0) / cw
        out_w.append(cw)
        out_m.append(cm)
        out_p.append(cp)
        alive[cluster] = False
    w = np.array(out_w)
    m = np.stack(out_m)
    p = _symmetrise(np.stack(out_p))
    if w.size > max_components:
        top = np.argsort(-w, kind="stable")[:max_components]
        w, m, p = w[top], m[top], p[top]
    return GaussianMixture(w, m, p)


def _region_mass_batch(w, means, covs, bounds) -> np.ndarray:
    """Mass of each component inside an axis-aligned box on the first two
    state dimensions, by Gauss-Legendre quadrature over the conditional
    decomposition of the bivariate normal.
    """
    bounds = np.asarray(bounds, dtype=float).reshape(2, 2)
    n = w.size
    if n == 0:
        return np.zeros(0)
    mx, my = means[:, 0], means[:, 1]
    sx = np.sqrt(covs[:, 0, 0])
    sy = np.sqrt(covs[:, 1, 1])
    rho = np.clip(covs[:, 0, 1] / (sx * sy), -1.0 + 1e-12, 1.0 - 1e-12)
    (ax, bx), (ay, by) = bounds
    lo = np.maximum(ax, mx - _RANGE_SIGMAS * sx)
    hi = np.minimum(bx, mx + _RANGE_SIGMAS * sx)
    full_x = (ax <= mx - _RANGE_SIGMAS * sx) & (bx >= mx + _RANGE_SIGMAS * sx)
    full_y = (ay <= my - _RANGE_SIGMAS * sy) & (by >= my + _RANGE_SIGMAS * sy)
    out = np.zeros(n)
    exact = full_x & full_y
    out[exact] = w[exact]
    todo = ~exact & (lo < hi)
    if not np.any(todo):
        return out
    half = 0.5 * (hi[todo] - lo[todo])
    mid = 0.5 * (hi[todo] + lo[todo])
    x = mid[:, None] + half[:, None] * _GL_NODES[None, :]
    zx = (x - mx[todo, None]) / sx[todo, None]
    phi_x = np.exp(-0.5 * zx * zx) / (np.sqrt(2.0 * np.pi) * sx[todo, None])
    cond_mean = my[todo, None] + rho[todo, None] * sy[todo, None] * zx
    cond_sd = (sy[todo] * np.sqrt(1.0 - rho[todo] ** 2))[:, None]
    with np.errstate(invalid="ignore"):
        upper = ndtr((by - cond_mean) / cond_sd) if np.isfinite(by) else 1.0
        lower = ndtr((ay - cond_mean) / cond_sd) if np.isfinite(ay) else 0.0
    integrand = phi_x * (upper - lower)
    out[todo] = w[todo] * half * (integrand @ _GL_WEIGHTS)
    return np.maximum(out, 0.0)


def region_mass(comp: GaussianComponent, bounds) -> float:
    """Mass of one component inside an axis-aligned position box.

    ``bounds`` is ((x_lo, x_hi), (y_lo, y_hi)); infinities are allowed.
    Absolute accuracy is ~1e-7 of the component weight.
    """
    return float(
        _region_mass_batch(
            np.array([comp.weight]), comp.mean[None, :], comp.cov[None, :, :], bounds
        )[0]
    )


def extract_states(mix: GaussianMixture, expected_count: float) -> list[np.ndarray]:
    """State estimates: means of heavy components (weight > 0.5), capped or
    padded to round(expected_count) in weight order; ties break by index.
    """
    if expected_count < 0:
        raise ValueError("expected_count must be >= 0")
    n_target = int(np.floor(expected_count + 0.5))
    order = np.argsort(-mix.w, kind="stable")
    heavy = [i for i in order if mix.w[i] > 0.5]
    chosen = heavy[:n_target]
    if len(chosen) < n_target:
        light = [i for i in order if mix.w[i] <= 0.5]
        chosen = chosen + light[: n_target - len(chosen)]
    return [mix.m[i].copy() for i in chosen]
