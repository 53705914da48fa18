"""Independent oracles for the update equations on a small discrete space.

Two routes that share no code with the library internals:

* a probability-generating-functional oracle: the joint functional of the
  predicted process and the observation process is evaluated in closed form
  on a finite state/measurement space, and its mixed derivatives (one per
  observed measurement, plus directional derivatives for the region
  indicators) are extracted numerically by Cauchy contour integration;

* an exact-Bayes enumeration oracle: every target configuration on the
  finite space is enumerated, the measurement-multiset likelihood is built
  by summing over detection assignments, and posterior count moments follow
  from the normalised posterior over configurations.

Both accept a Panjer, Poisson, or general i.i.d.-cluster predicted process
and Panjer/Poisson clutter, so they cover all three filters.
"""

import itertools
import math
from dataclasses import dataclass

import numpy as np

from panjertrack.cardinality import Panjer, PoissonLimit, panjer_pmf


@dataclass
class DiscreteModel:
    """Finite-space observation model.

    spatial: (nx,) predicted spatial distribution, sums to 1
    p_d: (nx,) per-site detection probability
    likelihood: (nz, nx), L[z, x] = P(measurement at z | detected target at x)
    s_c: (nz,) clutter spatial pmf, sums to 1
    prior: Panjer | PoissonLimit | np.ndarray (cardinality pmf, i.i.d. cluster)
    clutter: Panjer | PoissonLimit
    """

    spatial: np.ndarray
    p_d: np.ndarray
    likelihood: np.ndarray
    s_c: np.ndarray
    prior: object
    clutter: object

    @property
    def nx(self):
        return self.spatial.size

    @property
    def nz(self):
        return self.s_c.size

    def prior_pmf(self, n_top):
        if isinstance(self.prior, np.ndarray):
            out = np.zeros(n_top + 1)
            out[: min(self.prior.size, n_top + 1)] = self.prior[: n_top + 1]
            return out
        return np.asarray(panjer_pmf(self.prior, np.arange(n_top + 1)))

    def clutter_pmf(self, n_top):
        return np.asarray(panjer_pmf(self.clutter, np.arange(n_top + 1)))

    def intensity(self):
        if isinstance(self.prior, np.ndarray):
            mean = float(np.arange(self.prior.size) @ self.prior)
        elif isinstance(self.prior, PoissonLimit):
            mean = self.prior.rate
        else:
            mean = self.prior.alpha / self.prior.beta
        return mean * self.spatial


# ---------------------------------------------------------------------------
# PGFL route


def _joint_pgfl(model: DiscreteModel, g: np.ndarray, h: np.ndarray) -> np.ndarray:
    """G_J(g, h) = G_pred(h * G_d(g | .)) * G_c(g), batched over leading axes."""
    detect = (1.0 - model.p_d) + model.p_d * (g @ model.likelihood)
    inner = np.sum(h * detect * model.spatial, axis=-1)
    c_inner = g @ model.s_c
    prior = model.prior
    if isinstance(prior, PoissonLimit):
        g_pred = np.exp(prior.rate * (inner - 1.0))
    elif isinstance(prior, Panjer):
        g_pred = (1.0 + (1.0 - inner) / prior.beta) ** (-prior.alpha)
    else:
        coeffs = np.asarray(prior, dtype=float)
        g_pred = np.zeros_like(inner)
        for c in coeffs[::-1]:
            g_pred = g_pred * inner + c
    clutter = model.clutter
    if isinstance(clutter, PoissonLimit):
        g_c = np.exp(clutter.rate * (c_inner - 1.0))
    else:
        g_c = (1.0 + (1.0 - c_inner) / clutter.beta) ** (-clutter.alpha)
    return g_pred * g_c


def _contour_mixed_derivative(fn, n_vars, radius=0.1, nodes=12):
    """First-order mixed partial in every variable at the origin.

    fn takes a (batch, n_vars) complex array.  Each variable runs around a
    circle of the given radius; the trapezoid rule on analytic functions is
    spectrally accurate, so the product contraction recovers the derivative.
    """
    if n_vars == 0:
        return float(np.real(fn(np.zeros((1, 0), dtype=complex))[0]))
    theta = 2.0 * np.pi * np.arange(nodes) / nodes
    ring = radius * np.exp(1j * theta)
    grids = np.meshgrid(*([ring] * n_vars), indexing="ij")
    pts = np.stack([gr.ravel() for gr in grids], axis=-1)
    vals = fn(pts).reshape((nodes,) * n_vars)
    weight = np.exp(-1j * theta) / (nodes * radius)
    for _ in range(n_vars):
        vals = np.tensordot(vals, weight, axes=([0], [0]))
    return float(np.real(vals))


class PgflOracle:
    """Posterior count moments extracted from the joint PGFL."""

    def __init__(self, model: DiscreteModel, meas_idx, radius=0.1, nodes=12):
        self.model = model
        self.meas_idx = list(meas_idx)
        self.radius = radius
        self.nodes = nodes
        self._den = self._derivative([])

    def _derivative(self, directions) -> float:
        """Mixed derivative in one delta direction per observed measurement
        and one directional (region indicator) variable per entry of
        ``directions``, evaluated at g = 0, h = 1.
        """
        m = len(self.meas_idx)
        extra = [np.asarray(d, dtype=float) for d in directions]
        n_vars = m + len(extra)
        model = self.model

        def fn(pts):
            g = np.zeros(pts.shape[:-1] + (model.nz,), dtype=complex)
            for col, z in enumerate(self.meas_idx):
                g[..., z] += pts[..., col]
            h = np.ones(pts.shape[:-1] + (model.nx,), dtype=complex)
            for k, direction in enumerate(extra):
                h += pts[..., m + k, None] * direction
            return _joint_pgfl(model, g, h)

        return _contour_mixed_derivative(fn, n_vars, self.radius, self.nodes)

    def mean(self, mask) -> float:
        return self._derivative([mask]) / self._den

    def factorial_moment(self, mask_b, mask_bp) -> float:
        return self._derivative([mask_b, mask_bp]) / self._den

    def cov(self, mask_b, mask_bp) -> float:
        both = np.asarray(mask_b, dtype=float) * np.asarray(mask_bp, dtype=float)
        return (
            self.factorial_moment(mask_b, mask_bp)
            + self.mean(both)
            - self.mean(mask_b) * self.mean(mask_bp)
        )

    def var(self, mask) -> float:
        return self.cov(mask, mask)


# ---------------------------------------------------------------------------
# exact-Bayes enumeration route


class EnumerationOracle:
    """Brute-force Bayes over target configurations on the finite space."""

    def __init__(self, model: DiscreteModel, meas_idx, n_top=80):
        self.model = model
        self.meas_idx = list(meas_idx)
        prior = model.prior_pmf(n_top)
        clutter = model.clutter_pmf(len(self.meas_idx))
        nx = model.nx
        configs = []
        weights = []
        for total in range(n_top + 1):
            if prior[total] <= 0:
                continue
            for cfg in itertools.combinations_with_replacement(range(nx), total):
                counts = np.bincount(cfg, minlength=nx)
                log_multi = math.lgamma(total + 1) - sum(
                    math.lgamma(c + 1) for c in counts
                )
                spatial = np.prod(model.spatial**counts)
                p_cfg = prior[total] * math.exp(log_multi) * spatial
                like = self._likelihood(counts, clutter)
                if p_cfg * like > 0:
                    configs.append(counts)
                    weights.append(p_cfg * like)
        weights = np.asarray(weights)
        self.configs = np.asarray(configs)
        self.post = weights / weights.sum()

    def _likelihood(self, counts, clutter_pmf) -> float:
        """P(measurement multiset | configuration): sum over assignments of
        each measurement to a generating site or to clutter.
        """
        model = self.model
        m = len(self.meas_idx)
        q_d = 1.0 - model.p_d
        total = 0.0
        for assign in itertools.product(range(model.nx + 1), repeat=m):
            used = np.zeros(model.nx, dtype=int)
            ok = True
            w = 1.0
            n_clutter = 0
            for z, site in zip(self.meas_idx, assign):
                if site == model.nx:
                    n_clutter += 1
                    w *= model.s_c[z]
                else:
                    if used[site] >= counts[site]:
                        ok = False
                        break
                    # falling factorial: which of the remaining targets fired
                    w *= (counts[site] - used[site]) * model.p_d[site] * model.likelihood[z, site]
                    used[site] += 1
            if not ok or w == 0.0:
                continue
            w *= np.prod(q_d ** (counts - used))
            w *= clutter_pmf[n_clutter] * math.factorial(n_clutter)
            total += w
        return total

    def mean(self, mask) -> float:
        in_b = self.configs @ np.asarray(mask, dtype=float)
        return float(self.post @ in_b)

    def cov(self, mask_b, mask_bp) -> float:
        nb = self.configs @ np.asarray(mask_b, dtype=float)
        nbp = self.configs @ np.asarray(mask_bp, dtype=float)
        return float(self.post @ (nb * nbp) - (self.post @ nb) * (self.post @ nbp))

    def var(self, mask) -> float:
        return self.cov(mask, mask)


# ---------------------------------------------------------------------------
# the library-side discrete update (shared assembly, no Gaussian plumbing)


def discrete_corrective_inputs(model: DiscreteModel, meas_idx):
    """Per-measurement masses and the term table for the discrete model."""
    mu = model.intensity()
    mu_phi = (1.0 - model.p_d) * mu
    mu_z = np.stack([model.p_d * model.likelihood[z] * mu for z in meas_idx])
    sc = np.array([model.s_c[z] for z in meas_idx])
    ratios = mu_z.sum(axis=1) / sc
    if isinstance(model.prior, Panjer):
        adjusted = float(np.sum((1.0 + model.p_d / model.prior.beta) * mu))
    else:
        adjusted = float(mu.sum())
    return mu, mu_phi, mu_z, sc, ratios, adjusted
