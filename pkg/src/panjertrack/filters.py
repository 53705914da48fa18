"""The three filter recursions: second-order (Panjer), PHD, and CPHD.

All three share the Gaussian-mixture detection blocks and differ in how the
missed-detection and per-measurement terms are weighted:

* second-order: the predicted mean/variance pair is converted to Panjer
  parameters at the start of every update and the corrective l-terms come
  from the Upsilon ratios;
* PHD: Poisson closed forms (the corrective terms lose order dependence);
* CPHD: an i.i.d.-cluster predicted process; the per-count tables are
  averaged against the propagated cardinality distribution, following the
  standard published recursion, and the same engine supplies the
  second-order l-analogues for regional statistics.

Every update emits an UpdateAudit holding the raw missed/detection blocks
and corrective terms, so regional means, variances and covariances can be
evaluated after the fact without re-running the filter.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.special import gammaln, logsumexp

from .cardinality import (
    CardinalityStats,
    Panjer,
    PanjerParams,
    PoissonLimit,
    panjer_from_moments,
    panjer_log_pmf,
    panjer_stats,
)
from .corrective import (
    CorrectiveTerms,
    MeasurementTermTable,
    _log_esf,
    _log_esf_drop_one,
    _terms_from_factors,
    corrective_terms,
    poisson_corrective_terms,
    updated_covariance,
    updated_mass,
)
from .gm import (
    GaussianMixture,
    LinearGaussianModel,
    _region_mass_batch,
    mixture_predict,
)

__all__ = [
    "SecondOrderState",
    "PhdState",
    "CphdState",
    "BirthModel",
    "ClutterModel",
    "UpdateAudit",
    "sophd_predict",
    "sophd_update",
    "phd_predict",
    "phd_update",
    "cphd_predict",
    "cphd_update",
    "card_mean",
    "card_var",
]

log = logging.getLogger(__name__)

# pre-clamp negatives below this fraction of the mean indicate a real defect
VAR_CLAMP_REL = 1e-6


def _bounds_key(bounds) -> tuple:
    b = np.asarray(bounds, dtype=float).reshape(-1)
    return tuple(b.tolist())


@dataclass(frozen=True)
class SecondOrderState:
    """Intensity mixture plus the variance of the total target count."""

    intensity: GaussianMixture
    var_total: float

    def __post_init__(self) -> None:
        if self.var_total < 0:
            raise ValueError("count variance must be >= 0")


@dataclass(frozen=True)
class PhdState:
    intensity: GaussianMixture


@dataclass(frozen=True)
class CphdState:
    """Intensity mixture plus a truncated cardinality distribution."""

    intensity: GaussianMixture
    cardinality: np.ndarray

    def __post_init__(self) -> None:
        card = np.asarray(self.cardinality, dtype=float)
        object.__setattr__(self, "cardinality", card)
        if abs(card.sum() - 1.0) > 1e-9:
            raise ValueError("cardinality distribution must sum to 1")

    @classmethod
    def empty(cls, dim: int, n_max: int) -> "CphdState":
        card = np.zeros(n_max + 1)
        card[0] = 1.0
        return cls(GaussianMixture.empty(dim), card)

    @property
    def n_max(self) -> int:
        return self.cardinality.size - 1


def card_mean(card: np.ndarray) -> float:
    return float(np.arange(card.size) @ card)


def card_var(card: np.ndarray) -> float:
    n = np.arange(card.size)
    mean = float(n @ card)
    return float(n * n @ card - mean * mean)


@dataclass(frozen=True)
class BirthModel:
    """Newborn-target model: spatial mixture plus a count family.

    ``var`` is the variance of the newborn count; the Poisson family pins it
    to the mixture mass, the negative-binomial family requires var >= mass.
    """

    mixture: GaussianMixture
    var: float
    family: str = "poisson"

    def __post_init__(self) -> None:
        mass = self.mixture.mass()
        if self.family == "poisson":
            if not math.isclose(self.var, mass, rel_tol=1e-9, abs_tol=1e-12):
                raise ValueError("Poisson birth requires var equal to the mixture mass")
        elif self.family == "negative_binomial":
            if self.var < mass:
                raise ValueError("negative binomial birth requires var >= mass")
        else:
            raise ValueError(f"unknown birth family {self.family!r}")

    def cardinality_params(self) -> PanjerParams:
        mass = self.mixture.mass()
        if self.family == "poisson":
            return PoissonLimit(mass)
        return panjer_from_moments(CardinalityStats(mass, self.var))


@dataclass(frozen=True)
class ClutterModel:
    """Panjer (or Poisson) false-alarm count with uniform spatial density."""

    params: PanjerParams
    density: float

    def __post_init__(self) -> None:
        if not self.density > 0:
            raise ValueError("clutter spatial density must be > 0")

    @property
    def rate(self) -> float:
        return panjer_stats(self.params).mean


@dataclass
class UpdateAudit:
    """Cached per-update quantities for after-the-fact regional statistics.

    The detection blocks are kept unscaled (weights p_d * w * N(z; .)), so
    mu^z masses over any region can be reconstructed; corrective terms are
    applied only at assembly.
    """

    kind: str
    missed: GaussianMixture
    det_w: np.ndarray  # (n_meas, n_comp)
    det_m: np.ndarray  # (n_meas, n_comp, dim)
    det_P: np.ndarray  # (n_comp, dim, dim), shared across measurements
    clutter_density: np.ndarray  # (n_meas,)
    table: MeasurementTermTable
    mass: float
    var: float
    var_raw: float
    degenerate_cardinality: Optional[str] = None
    cardinality: Optional[np.ndarray] = None
    _terms: Optional[CorrectiveTerms] = field(default=None, repr=False)
    _terms_factory: Optional[Callable[[], CorrectiveTerms]] = field(default=None, repr=False)
    _region_cache: dict = field(default_factory=dict, repr=False)

    @property
    def n_measurements(self) -> int:
        return self.det_w.shape[0]

    @property
    def terms(self) -> CorrectiveTerms:
        if self._terms is None:
            self._terms = self._terms_factory()
        return self._terms

    def missed_mass_in(self, bounds=None) -> float:
        if bounds is None:
            return self.table.missed_mass
        key = ("missed", _bounds_key(bounds))
        if key not in self._region_cache:
            self._region_cache[key] = self.missed.region_mass(bounds)
        return self._region_cache[key]

    def ratio_masses_in(self, bounds=None) -> np.ndarray:
        """mu^z(B) / s_c(z) for every measurement."""
        if bounds is None:
            return self.table.ratios
        key = ("ratios", _bounds_key(bounds))
        if key not in self._region_cache:
            m, n = self.det_w.shape
            if m == 0:
                self._region_cache[key] = np.zeros(0)
            else:
                covs = np.broadcast_to(self.det_P, (m,) + self.det_P.shape).reshape(
                    m * n, *self.det_P.shape[1:]
                )
                masses = _region_mass_batch(
                    self.det_w.reshape(m * n), self.det_m.reshape(m * n, -1), covs, bounds
                )
                self._region_cache[key] = masses.reshape(m, n).sum(axis=1) / self.clutter_density
        return self._region_cache[key]

    def replay_mass(self) -> float:
        """Updated total mass recomputed from the audit's own parts."""
        return updated_mass(self.table.missed_mass, self.table.ratios, self.terms)


@dataclass(frozen=True)
class _UpdateBlocks:
    missed: GaussianMixture
    det_w: np.ndarray
    det_m: np.ndarray
    det_P: np.ndarray
    mu_z: np.ndarray


def _update_blocks(
    mix: GaussianMixture, measurements: np.ndarray, model: LinearGaussianModel
) -> _UpdateBlocks:
    """Missed-detection mixture and per-measurement Kalman blocks, batched."""
    zs = np.asarray(measurements, dtype=float)
    if zs.ndim == 1:
        zs = zs.reshape(0, model.h.shape[0]) if zs.size == 0 else zs[None, :]
    m = zs.shape[0]
    n = len(mix)
    d = mix.dim
    dz = model.h.shape[0]
    missed = mix.scaled(1.0 - model.p_detect)
    if n == 0 or m == 0:
        return _UpdateBlocks(
            missed,
            np.zeros((m, n)),
            np.zeros((m, n, d)),
            np.zeros((n, d, d)),
            np.zeros(m),
        )
    h = model.h
    s = np.einsum("ij,njk,lk->nil", h, mix.P, h) + model.r
    s = 0.5 * (s + np.swapaxes(s, 1, 2))
    try:
        s_inv = np.linalg.inv(s)
    except np.linalg.LinAlgError as exc:
        raise ValueError("singular innovation covariance in update blocks") from exc
    sign, logdet = np.linalg.slogdet(s)
    if np.any(sign <= 0):
        bad = int(np.nonzero(sign <= 0)[0][0])
        raise ValueError(f"singular innovation covariance for component {bad}")
    gain = np.einsum("nij,kj,nkl->nil", mix.P, h, s_inv)
    eye = np.eye(d)
    joseph = eye[None] - np.einsum("nij,jk->nik", gain, h)
    det_P = (
        np.einsum("nij,njk,nlk->nil", joseph, mix.P, joseph)
        + np.einsum("nij,jk,nlk->nil", gain, model.r, gain)
    )
    det_P = 0.5 * (det_P + np.swapaxes(det_P, 1, 2)) + 1e-9 * eye
    innov = zs[:, None, :] - (mix.m @ h.T)[None, :, :]
    quad = np.einsum("mni,nij,mnj->mn", innov, s_inv, innov)
    loglik = -0.5 * (quad + logdet[None, :] + dz * math.log(2.0 * math.pi))
    det_w = model.p_detect * mix.w[None, :] * np.exp(loglik)
    det_m = mix.m[None, :, :] + np.einsum("nij,mnj->mni", gain, innov)
    return _UpdateBlocks(missed, det_w, det_m, det_P, det_w.sum(axis=1))


def _assemble_intensity(
    blocks: _UpdateBlocks,
    missed_factor: float,
    det_factors: np.ndarray,
    sc: np.ndarray,
) -> GaussianMixture:
    """Updated mixture: scaled missed block then one block per measurement."""
    m, n = blocks.det_w.shape
    missed = blocks.missed.scaled(missed_factor)
    if m == 0:
        return missed
    w = (blocks.det_w * (det_factors / sc)[:, None]).reshape(m * n)
    means = blocks.det_m.reshape(m * n, -1)
    covs = np.broadcast_to(blocks.det_P, (m,) + blocks.det_P.shape).reshape(
        m * n, *blocks.det_P.shape[1:]
    )
    return missed.concat(GaussianMixture(w, means, covs))


def _predicted_params(stats: CardinalityStats) -> tuple[PanjerParams, Optional[str]]:
    if stats.var < stats.mean * (1.0 - 1e-9):
        return panjer_from_moments(stats), "underdispersed-clamped"
    return panjer_from_moments(stats), None


def sophd_predict(
    state: SecondOrderState, model: LinearGaussianModel, birth: BirthModel
) -> SecondOrderState:
    """Predict intensity and count variance through survival and birth."""
    intensity = mixture_predict(state.intensity, model, birth.mixture)
    p_s = model.p_survival
    var = (
        birth.var
        + p_s * p_s * state.var_total
        + p_s * (1.0 - p_s) * state.intensity.mass()
    )
    return SecondOrderState(intensity, var)


def sophd_update(
    state: SecondOrderState,
    measurements: np.ndarray,
    model: LinearGaussianModel,
    clutter: ClutterModel,
) -> tuple[SecondOrderState, UpdateAudit]:
    """Second-order data update.

    Converts the predicted (mean, variance) to Panjer parameters, builds the
    measurement table, and assembles the updated intensity and count
    variance from the corrective terms.
    """
    mass = state.intensity.mass()
    if not mass > 0:
        raise ValueError("predicted intensity mass must be > 0 before an update")
    params, degenerate = _predicted_params(CardinalityStats(mass, state.var_total))
    blocks = _update_blocks(state.intensity, measurements, model)
    m = blocks.mu_z.size
    sc = np.full(m, clutter.density)
    ratios = blocks.mu_z / clutter.density
    if isinstance(params, Panjer):
        adjusted = (1.0 + model.p_detect / params.beta) * mass
    else:
        adjusted = mass
    table = MeasurementTermTable(
        ratios, adjusted_mass=adjusted, missed_mass=(1.0 - model.p_detect) * mass
    )
    terms = corrective_terms(table, params, clutter.params)
    intensity = _assemble_intensity(blocks, terms.l1_phi, terms.l1, sc)
    new_mass = updated_mass(table.missed_mass, ratios, terms)
    var_raw = updated_covariance(
        new_mass, table.missed_mass, table.missed_mass, ratios, ratios, terms
    )
    var = max(var_raw, 0.0)
    audit = UpdateAudit(
        kind="sophd",
        missed=blocks.missed,
        det_w=blocks.det_w,
        det_m=blocks.det_m,
        det_P=blocks.det_P,
        clutter_density=sc,
        table=table,
        mass=new_mass,
        var=var,
        var_raw=var_raw,
        degenerate_cardinality=degenerate,
        _terms=terms,
    )
    return SecondOrderState(intensity, var), audit


def phd_predict(state: PhdState, model: LinearGaussianModel, birth: BirthModel) -> PhdState:
    return PhdState(mixture_predict(state.intensity, model, birth.mixture))


def phd_update(
    state: PhdState,
    measurements: np.ndarray,
    model: LinearGaussianModel,
    clutter: ClutterModel,
) -> tuple[PhdState, UpdateAudit]:
    """Classic Gaussian-mixture PHD update with Poisson clutter."""
    if not isinstance(clutter.params, PoissonLimit):
        raise ValueError(
            "the classic update assumes a Poisson clutter count; "
            "use the second-order filter for Panjer clutter"
        )
    mass = state.intensity.mass()
    if not mass > 0:
        raise ValueError("predicted intensity mass must be > 0 before an update")
    blocks = _update_blocks(state.intensity, measurements, model)
    m = blocks.mu_z.size
    sc = np.full(m, clutter.density)
    ratios = blocks.mu_z / clutter.density
    table = MeasurementTermTable(
        ratios, adjusted_mass=mass, missed_mass=(1.0 - model.p_detect) * mass
    )
    terms = poisson_corrective_terms(ratios, clutter.params.rate)
    intensity = _assemble_intensity(blocks, 1.0, terms.l1, sc)
    new_mass = updated_mass(table.missed_mass, ratios, terms)
    var_raw = updated_covariance(
        new_mass, table.missed_mass, table.missed_mass, ratios, ratios, terms
    )
    audit = UpdateAudit(
        kind="phd",
        missed=blocks.missed,
        det_w=blocks.det_w,
        det_m=blocks.det_m,
        det_P=blocks.det_P,
        clutter_density=sc,
        table=table,
        mass=new_mass,
        var=max(var_raw, 0.0),
        var_raw=var_raw,
        _terms=terms,
    )
    return PhdState(intensity), audit


def _survival_cardinality(card: np.ndarray, p_s: float) -> np.ndarray:
    """Binomial thinning of the posterior count: P(j survivors)."""
    n_max = card.size - 1
    n = np.arange(n_max + 1)
    log_binom = (
        gammaln(n[:, None] + 1.0) - gammaln(n[None, :] + 1.0) - gammaln(n[:, None] - n[None, :] + 1.0)
    )
    with np.errstate(divide="ignore", invalid="ignore"):
        log_ps = n[None, :] * (math.log(p_s) if p_s > 0 else -np.inf)
        log_qs = (n[:, None] - n[None, :]) * (math.log1p(-p_s) if p_s < 1 else -np.inf)
        log_ps = np.where(n[None, :] == 0, 0.0, log_ps)
        log_qs = np.where(n[:, None] == n[None, :], 0.0, log_qs)
    grid = log_binom + log_ps + log_qs
    grid = np.where(n[None, :] > n[:, None], -np.inf, grid)
    with np.errstate(over="ignore"):
        thin = np.exp(grid)
    return thin.T @ card


def cphd_predict(
    state: CphdState, model: LinearGaussianModel, birth: BirthModel
) -> CphdState:
    """CPHD prediction: mixture survival/birth plus cardinality convolution."""
    intensity = mixture_predict(state.intensity, model, birth.mixture)
    n_max = state.n_max
    surv = _survival_cardinality(state.cardinality, model.p_survival)
    birth_pmf = np.asarray(
        np.exp(panjer_log_pmf(birth.cardinality_params(), np.arange(n_max + 1)))
    )
    bsum = birth_pmf.sum()
    if bsum <= 0:
        raise ValueError("birth cardinality underflows the truncation window")
    birth_pmf = birth_pmf / bsum
    card = np.convolve(birth_pmf, surv)[: n_max + 1]
    total = card.sum()
    if total < 1.0 - 1e-6:
        log.warning("cphd predicted cardinality lost %.2e mass to truncation", 1 - total)
    return CphdState(intensity, card / total)


def _cphd_factor_tables(
    card: np.ndarray, phi_frac: float, log_mu: float, p_k_log: np.ndarray, m: int
):
    """Per-order tables for the i.i.d.-cluster update.

    Returns (log P^n_r grid, phi exponent helper, cardinality-averaged
    target factors, clutter factors).  The target factor at order r is
    A_r / mu^r with A_r = sum_n p(n) P^n_r phi^(n-r): the exact analogue of
    the Panjer (alpha)_r/(beta F)^r, averaged against the cardinality.
    """
    n_max = card.size - 1
    n = np.arange(n_max + 1, dtype=float)
    r = np.arange(max(m + 3, 1), dtype=float)
    log_perm = gammaln(n[:, None] + 1.0) - gammaln(n[:, None] - r[None, :] + 1.0)
    log_perm = np.where(r[None, :] > n[:, None], -np.inf, log_perm)

    def phi_pow(exponent: np.ndarray) -> np.ndarray:
        """exponent * log(phi) with the 0 * log(0) = 0 convention."""
        if phi_frac > 0:
            return exponent * math.log(phi_frac)
        return np.where(exponent == 0, 0.0, -np.inf)

    with np.errstate(divide="ignore", invalid="ignore"):
        log_card = np.where(card > 0, np.log(np.maximum(card, 1e-300)), -np.inf)
        grid = log_card[:, None] + log_perm + phi_pow(n[:, None] - r[None, :])
    log_a = logsumexp(grid, axis=0)
    t_logs = log_a - r * log_mu
    t_signs = np.where(np.isneginf(t_logs), 0.0, 1.0)
    rc = np.arange(m + 1, dtype=float)
    c_logs = gammaln(rc + 1.0) + p_k_log
    c_signs = np.where(np.isneginf(c_logs), 0.0, 1.0)
    return log_perm, phi_pow, (t_signs, t_logs), (c_signs, c_logs)


def cphd_update(
    state: CphdState,
    measurements: np.ndarray,
    model: LinearGaussianModel,
    clutter: ClutterModel,
) -> tuple[CphdState, UpdateAudit]:
    """Standard i.i.d.-cluster (CPHD) data update.

    The intensity coefficients and cardinality update follow the published
    per-count tables; the second-order l-analogues for regional statistics
    are attached lazily to the audit via the shared corrective engine.
    """
    mass = state.intensity.mass()
    if not mass > 0:
        raise ValueError("predicted intensity mass must be > 0 before an update")
    card = state.cardinality
    blocks = _update_blocks(state.intensity, measurements, model)
    m = blocks.mu_z.size
    sc = np.full(m, clutter.density)
    ratios = blocks.mu_z / clutter.density
    phi_frac = 1.0 - model.p_detect
    log_mu = math.log(mass)
    p_k_log = np.asarray(panjer_log_pmf(clutter.params, np.arange(m + 1)), dtype=float).reshape(-1)
    with np.errstate(divide="ignore"):
        log_t = np.log(ratios)
    log_e = _log_esf(log_t)
    n_max = card.size - 1
    n = np.arange(n_max + 1, dtype=float)
    log_perm, phi_pow, t_factors, c_factors = _cphd_factor_tables(
        card, phi_frac, log_mu, p_k_log, m
    )
    c_signs, c_logs = c_factors
    j = np.arange(m + 1)

    with np.errstate(divide="ignore", invalid="ignore"):
        log_card = np.where(card > 0, np.log(np.maximum(card, 1e-300)), -np.inf)

    def per_count_upsilon(u: int, log_e_row: np.ndarray, m_z: int) -> np.ndarray:
        """log Upsilon_u[Z](n) for every count n, |Z| = m_z."""
        jj = np.arange(m_z + 1)
        base = c_logs[m_z - jj] + log_e_row[: m_z + 1] - jj * log_mu
        with np.errstate(invalid="ignore"):
            grid = (
                log_perm[:, jj + u]
                + phi_pow(n[:, None] - (jj + u)[None, :])
                + base[None, :]
            )
        return logsumexp(grid, axis=1)

    log_ups0_n = per_count_upsilon(0, log_e, m)
    log_ups1_n = per_count_upsilon(1, log_e, m)
    log_den = logsumexp(log_ups0_n + log_card)
    l1_phi = math.exp(logsumexp(log_ups1_n + log_card) - log_den - log_mu)

    if m > 0:
        drop_one = _log_esf_drop_one(log_t)
        jj = np.arange(m)
        base = c_logs[m - 1 - jj][None, :] + drop_one - jj[None, :] * log_mu
        with np.errstate(invalid="ignore"):
            grid = (
                log_perm[None, :, jj + 1]
                + phi_pow(n[None, :, None] - (jj + 1)[None, None, :])
                + base[:, None, :]
            )
        per_z = logsumexp(grid, axis=2)  # (m, n_max+1)
        l1 = np.exp(logsumexp(per_z + log_card[None, :], axis=1) - log_den - log_mu)
    else:
        l1 = np.zeros(0)

    log_card_post = log_ups0_n + log_card
    card_post = np.exp(log_card_post - logsumexp(log_card_post))
    card_post = card_post / card_post.sum()

    table = MeasurementTermTable(ratios, adjusted_mass=mass, missed_mass=phi_frac * mass)

    engine = _terms_from_factors(log_t, t_factors, c_factors)
    intensity = _assemble_intensity(blocks, l1_phi, l1, sc)
    new_mass = updated_mass(table.missed_mass, ratios, engine)
    var_raw = updated_covariance(
        new_mass, table.missed_mass, table.missed_mass, ratios, ratios, engine
    )
    audit = UpdateAudit(
        kind="cphd",
        missed=blocks.missed,
        det_w=blocks.det_w,
        det_m=blocks.det_m,
        det_P=blocks.det_P,
        clutter_density=sc,
        table=table,
        mass=new_mass,
        var=max(var_raw, 0.0),
        var_raw=var_raw,
        cardinality=card_post,
        _terms=engine,
    )
    return CphdState(intensity, card_post), audit
