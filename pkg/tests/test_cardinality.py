"""Panjer cardinality model: conversions, pmf, and log-space rising factorials."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from panjertrack.cardinality import (
    CardinalityStats,
    Panjer,
    PoissonLimit,
    panjer_from_moments,
    panjer_log_pmf,
    panjer_pmf,
    panjer_stats,
    pochhammer_log,
    pochhammer_log_table,
)


def poch_value(zeta, n):
    s = pochhammer_log(zeta, n)
    return s.sign * math.exp(s.log)


class TestPochhammer:
    def test_order_zero_is_one(self):
        assert poch_value(5.0, 0) == 1.0

    def test_small_integer(self):
        assert poch_value(3.0, 2) == pytest.approx(12.0, rel=1e-12)

    def test_half(self):
        # direct product 0.5 * 1.5 * 2.5
        assert poch_value(0.5, 3) == pytest.approx(1.875, rel=1e-12)

    def test_zero_factor_gives_sign_zero(self):
        s = pochhammer_log(-2.0, 5)
        assert s.sign == 0.0

    def test_negative_sign_tracking(self):
        # (-2.5)(-1.5)(-0.5) = -1.875
        assert poch_value(-2.5, 3) == pytest.approx(-1.875, rel=1e-12)

    def test_table_matches_scalar(self):
        for zeta in (4.2, 0.3, -3.0, -2.5):
            signs, logs = pochhammer_log_table(zeta, 6)
            for n in range(7):
                s = pochhammer_log(zeta, n)
                assert signs[n] == s.sign
                if s.sign != 0:
                    assert logs[n] == pytest.approx(s.log, abs=1e-12)


class TestMomentConversion:
    def test_paper_birth_model(self):
        p = panjer_from_moments(CardinalityStats(25.0, 100.0))
        assert isinstance(p, Panjer)
        assert p.alpha == pytest.approx(625.0 / 75.0, rel=1e-12)
        assert p.beta == pytest.approx(1.0 / 3.0, rel=1e-12)

    def test_equal_moments_is_poisson(self):
        p = panjer_from_moments(CardinalityStats(7.0, 7.0))
        assert p == PoissonLimit(7.0)

    def test_high_variance_birth_model(self):
        p = panjer_from_moments(CardinalityStats(1.0, 100.0))
        assert isinstance(p, Panjer)
        assert p.alpha == pytest.approx(1.0 / 99.0, rel=1e-12)
        assert p.beta == pytest.approx(1.0 / 99.0, rel=1e-12)

    def test_nonpositive_mean_rejected(self):
        with pytest.raises(ValueError, match="mean"):
            panjer_from_moments(CardinalityStats(0.0, 4.0))

    def test_underdispersed_clamps_by_default(self):
        p = panjer_from_moments(CardinalityStats(10.0, 4.0))
        assert p == PoissonLimit(10.0)

    def test_underdispersed_binomial_policy(self):
        p = panjer_from_moments(CardinalityStats(10.0, 4.0), underdispersed="binomial")
        assert isinstance(p, Panjer)
        assert p.alpha == round(p.alpha) and p.alpha < 0
        assert p.beta < 0
        assert panjer_stats(p).mean == pytest.approx(10.0, rel=1e-12)

    def test_stats_examples(self):
        s = panjer_stats(Panjer(625.0 / 75.0, 1.0 / 3.0))
        assert s.mean == pytest.approx(25.0, rel=1e-12)
        assert s.var == pytest.approx(100.0, rel=1e-12)
        assert panjer_stats(PoissonLimit(5.0)) == CardinalityStats(5.0, 5.0)
        s = panjer_stats(Panjer(1.0, 1.0))
        assert (s.mean, s.var) == (pytest.approx(1.0), pytest.approx(2.0))

    @given(
        mean=st.floats(0.01, 200.0),
        excess=st.floats(1e-6, 500.0),
    )
    @settings(max_examples=100, deadline=None)
    def test_round_trip(self, mean, excess):
        stats = CardinalityStats(mean, mean + excess)
        back = panjer_stats(panjer_from_moments(stats))
        assert back.mean == pytest.approx(mean, rel=1e-12)
        assert back.var == pytest.approx(mean + excess, rel=1e-12)

    def test_invalid_parameter_pairs_rejected(self):
        with pytest.raises(ValueError):
            Panjer(-2.5, -1.0)  # negative non-integer alpha
        with pytest.raises(ValueError):
            Panjer(3.0, -1.0)
        with pytest.raises(ValueError):
            PoissonLimit(-1.0)


class TestPmf:
    def test_zero_count_closed_form(self):
        p = Panjer(4.0, 2.0)
        assert panjer_pmf(p, 0) == pytest.approx((1 + 1 / 2.0) ** -4.0, rel=1e-12)

    def test_geometric_special_case(self):
        # alpha = beta = 1 gives a geometric law 2^-(n+1)
        p = Panjer(1.0, 1.0)
        for n in range(4):
            assert panjer_pmf(p, n) == pytest.approx(2.0 ** -(n + 1), rel=1e-12)

    def test_poisson_pmf(self):
        assert panjer_pmf(PoissonLimit(2.0), 1) == pytest.approx(2 * math.exp(-2), rel=1e-12)

    def test_binomial_branch_terminates(self):
        # alpha = -4, beta = -2: four-trial binomial, mean 2, var 1
        p = Panjer(-4.0, -2.0)
        probs = panjer_pmf(p, np.arange(10))
        assert np.all(probs >= 0)
        assert probs[5:] == pytest.approx(0.0, abs=0.0)
        assert probs.sum() == pytest.approx(1.0, rel=1e-12)
        s = panjer_stats(p)
        n = np.arange(5)
        assert (n * probs[:5]).sum() == pytest.approx(s.mean, rel=1e-10)

    @pytest.mark.parametrize(
        "params",
        [Panjer(625.0 / 75.0, 1.0 / 3.0), Panjer(1.0, 1.0), PoissonLimit(9.0)],
    )
    def test_normalisation_at_forty_sigma(self, params):
        s = panjer_stats(params)
        n_top = math.ceil(s.mean + 40.0 * math.sqrt(s.var))
        probs = panjer_pmf(params, np.arange(n_top + 1))
        assert abs(1.0 - probs.sum()) <= 1e-8

    @pytest.mark.parametrize(
        "params,n_top",
        [
            (Panjer(625.0 / 75.0, 1.0 / 3.0), 425),
            (Panjer(1.0, 1.0), 60),
            (Panjer(1.0 / 99.0, 1.0 / 99.0), 4000),
        ],
    )
    def test_moments_from_pmf(self, params, n_top):
        # truncation chosen per-shape so the tail is negligible; the extreme
        # third case needs ~10x the forty-sigma point (see acceptance notes)
        n = np.arange(n_top + 1)
        probs = panjer_pmf(params, n)
        assert abs(1.0 - probs.sum()) < 1e-8
        mean = (n * probs).sum()
        var = (n * n * probs).sum() - mean**2
        s = panjer_stats(params)
        assert mean == pytest.approx(s.mean, rel=1e-6)
        assert var == pytest.approx(s.var, rel=1e-6)

    def test_poisson_convergence(self):
        lam, c = 3.0, 1e6
        n = np.arange(51)
        panjer_vals = panjer_pmf(Panjer(c * lam, c), n)
        poisson_vals = panjer_pmf(PoissonLimit(lam), n)
        assert np.max(np.abs(panjer_vals - poisson_vals)) < 1e-4

    def test_dispersion_signs(self):
        over = panjer_stats(Panjer(3.0, 0.7))
        assert over.var > over.mean
        under = panjer_stats(Panjer(-6.0, -2.0))
        assert under.var < under.mean

    def test_log_pmf_vector_matches_scalar(self):
        p = Panjer(2.5, 0.4)
        vec = panjer_log_pmf(p, np.arange(6))
        for n in range(6):
            assert vec[n] == pytest.approx(panjer_log_pmf(p, n), rel=1e-12)
