import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lrbridge import formulas as f
from lrbridge.errors import DomainError

import oracles

# Frozen from tests/oracles.py (quadrature + brentq, no closed forms).
SIGMA2_RHO07_CV2 = 0.6057646771975277
LR_RHO07_CV2_ETA12_M1 = 1.5281154956378569
LR_RHO03_CV15_ETA2_M125 = 18.10193359837563

rhos = st.floats(0.05, 0.95)
cvs = st.floats(0.5, 5.0)
etas = st.floats(0.1, 3.0)
margins = st.floats(1.0, 2.0)


class TestFrozenValues:
    def test_sigma2_from_rho(self):
        assert f.sigma2_from_rho(0.7, 2.0) == pytest.approx(SIGMA2_RHO07_CV2, rel=1e-12)

    def test_rho_from_sigma2_closed_value(self):
        assert f.rho_from_sigma2(math.log(2.0), 1.0) == pytest.approx(1 / math.sqrt(3), rel=1e-14)

    def test_baseline_loss_ratio(self):
        assert f.expected_loss_ratio(0.7, 2.0, 1.2, 1.0) == pytest.approx(LR_RHO07_CV2_ETA12_M1, rel=1e-12)

    def test_high_elasticity_loss_ratio(self):
        assert f.expected_loss_ratio(0.3, 1.5, 2.0, 1.25) == pytest.approx(LR_RHO03_CV15_ETA2_M125, rel=1e-12)


class TestAgainstOracle:
    @pytest.mark.parametrize("rho,cv", [(0.2, 1.5), (0.5, 2.0), (0.8, 3.5), (0.95, 0.7)])
    def test_sigma2_inverse(self, rho, cv):
        assert f.sigma2_from_rho(rho, cv) == pytest.approx(oracles.sigma2_for(rho, cv), rel=1e-9)

    @pytest.mark.parametrize(
        "rho,cv,eta,margin", [(0.2, 1.5, 0.8, 1.0), (0.5, 2.5, 1.6, 1.3), (0.8, 3.0, 2.5, 1.5)]
    )
    def test_loss_ratio(self, rho, cv, eta, margin):
        sigma2 = oracles.sigma2_for(rho, cv)
        assert f.expected_loss_ratio(rho, cv, eta, margin) == pytest.approx(
            oracles.loss_ratio(sigma2, cv, eta, margin), rel=1e-8
        )


class TestBoundaries:
    def test_perfect_model(self):
        assert f.expected_loss_ratio(1.0, 2.0, 1.2, 1.5) == pytest.approx(1 / 1.5, rel=1e-15)
        assert f.loss_ratio_error(1.0, 2.0, 1.2) == 0.0
        assert f.sigma2_from_rho(1.0, 2.0) == 0.0
        assert f.rho_from_sigma2(0.0, 2.0) == 1.0

    def test_rho_rounding_above_one_is_clamped(self):
        assert f.sigma2_from_rho(1.0 + 1e-12, 2.0) == 0.0

    def test_half_elasticity_identity(self):
        assert f.expected_loss_ratio(0.5, 2.0, 0.5, 1.25) == pytest.approx(0.8, rel=1e-15)

    @pytest.mark.parametrize("rho", [0.0, -0.1, 1.01, float("nan")])
    def test_bad_rho(self, rho):
        with pytest.raises(DomainError):
            f.expected_loss_ratio(rho, 2.0, 1.2)

    @pytest.mark.parametrize("kw", [{"cv": 0.0}, {"eta": 0.0}, {"margin": -1.0}, {"margin": float("inf")}])
    def test_bad_positive_params(self, kw):
        args = {"rho": 0.5, "cv": 2.0, "eta": 1.2, "margin": 1.0, **kw}
        with pytest.raises(DomainError):
            f.expected_loss_ratio(**args)

    def test_negative_sigma2(self):
        with pytest.raises(DomainError):
            f.rho_from_sigma2(-0.1, 2.0)

    def test_tiny_sigma2_keeps_precision(self):
        # first order: 1 - rho = sigma2 (1 + cv^-2) / 2
        rho = f.rho_from_sigma2(1e-12, 2.0)
        assert 1.0 - rho == pytest.approx(0.5e-12 * 1.25, rel=1e-3)


class TestTypedWrappers:
    def test_predict_matches_float_api(self):
        pop = f.PopulationMoments(2.0)
        q = f.ModelQuality.from_rho(0.7, 2.0)
        pred = f.predict(q, pop, f.MarketSpec(1.2, 1.5))
        assert pred.loss_ratio == pytest.approx(f.expected_loss_ratio(0.7, 2.0, 1.2, 1.5), rel=1e-15)
        assert pred.sigma2_implied == pytest.approx(SIGMA2_RHO07_CV2, rel=1e-12)
        d = pred.to_dict()
        assert set(d) >= {"loss_ratio", "elr", "sigma2_implied", "inputs"}

    def test_quality_from_sigma2(self):
        q = f.ModelQuality.from_sigma2(SIGMA2_RHO07_CV2, 2.0)
        assert q.rho == pytest.approx(0.7, rel=1e-12)

    def test_freq_sev_predict(self):
        fs = f.FreqSevQuality(0.6, 1.5, 0.8, 2.5)
        pred = f.predict_freq_sev(fs, f.MarketSpec(1.2, 1.3))
        assert pred.loss_ratio == pytest.approx(
            f.expected_loss_ratio_freq_sev(0.6, 1.5, 0.8, 2.5, 1.2, 1.3), rel=1e-14
        )
        assert fs.sigma2_total == pytest.approx(f.sigma2_from_rho(0.6, 1.5) + f.sigma2_from_rho(0.8, 2.5))


class TestProperties:
    @settings(max_examples=300)
    @given(rhos, cvs)
    def test_correlation_round_trip(self, rho, cv):
        assert f.rho_from_sigma2(f.sigma2_from_rho(rho, cv), cv) == pytest.approx(rho, rel=1e-10)

    @settings(max_examples=300)
    @given(rhos, cvs, etas, margins)
    def test_two_routes_agree(self, rho, cv, eta, margin):
        direct = f.expected_loss_ratio(rho, cv, eta, margin)
        via_sigma = f.expected_loss_ratio_from_sigma(f.sigma2_from_rho(rho, cv), eta, margin)
        assert direct == pytest.approx(via_sigma, rel=1e-12)

    @settings(max_examples=300)
    @given(rhos, cvs, rhos, cvs, etas, margins)
    def test_freq_sev_additivity(self, rf, cf, rs, cs, eta, margin):
        total = f.sigma2_from_rho(rf, cf) + f.sigma2_from_rho(rs, cs)
        assert f.expected_loss_ratio_freq_sev(rf, cf, rs, cs, eta, margin) == pytest.approx(
            f.expected_loss_ratio_from_sigma(total, eta, margin), rel=1e-12
        )

    @given(rhos, cvs, etas, margins)
    def test_elr_relation_is_exact(self, rho, cv, eta, margin):
        assert f.expected_loss_ratio(rho, cv, eta, margin) == (1.0 + f.loss_ratio_error(rho, cv, eta)) / margin

    @given(rhos, rhos, cvs, etas)
    def test_improvement_ratio_is_lr_ratio(self, a, b, cv, eta):
        expected = f.expected_loss_ratio(b, cv, eta) / f.expected_loss_ratio(a, cv, eta)
        assert f.improvement_ratio(a, b, cv, eta) == pytest.approx(expected, rel=1e-12)

    @given(rhos, cvs, st.floats(0.55, 3.0))
    def test_lr_decreases_in_rho_above_half_elasticity(self, rho, cv, eta):
        h = 1e-4
        assert f.expected_loss_ratio(min(rho + h, 1.0), cv, eta) < f.expected_loss_ratio(rho, cv, eta)

    @given(rhos, cvs, etas)
    def test_lr_increases_in_eta(self, rho, cv, eta):
        assert f.expected_loss_ratio(rho, cv, eta + 1e-3) > f.expected_loss_ratio(rho, cv, eta)

    @given(rhos, cvs, st.floats(0.55, 3.0))
    def test_elr_positive_above_half_elasticity(self, rho, cv, eta):
        assert f.loss_ratio_error(rho, cv, eta) > 0

    @given(rhos, cvs, st.floats(0.05, 0.45))
    def test_elr_negative_below_half_elasticity(self, rho, cv, eta):
        assert f.loss_ratio_error(rho, cv, eta) < 0


def improvements(p, cv, eta, n=50):
    """Relative and absolute LR improvements from a p-percent correlation gain."""
    grid = [0.05 + (0.9 / (1 + p) - 0.05) * i / (n - 1) for i in range(n)]
    rel, absolute = [], []
    for r in grid:
        old = f.expected_loss_ratio(r, cv, eta)
        new = f.expected_loss_ratio(r * (1 + p), cv, eta)
        rel.append((old - new) / old)
        absolute.append(old - new)
    return rel, absolute


class TestDiminishingReturns:
    @pytest.mark.parametrize("p", [0.05, 0.1, 0.25])
    @pytest.mark.parametrize("cv", [1.5, 2.5])
    @pytest.mark.parametrize("eta", [0.8, 1.2, 2.0])
    def test_strictly_decreasing(self, p, cv, eta):
        rel, absolute = improvements(p, cv, eta)
        assert all(b < a for a, b in zip(rel, rel[1:]))
        assert all(b < a for a, b in zip(absolute, absolute[1:]))

    def test_low_start_gains_more(self):
        low = 1 - f.improvement_ratio(0.2, 0.3, 2.0, 1.2)
        high = 1 - f.improvement_ratio(0.7, 0.8, 2.0, 1.2)
        assert low > high > 0
