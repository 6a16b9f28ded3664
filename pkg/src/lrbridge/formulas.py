"""Closed-form loss-ratio relationships for proportionally priced portfolios.

Setting: true expected losses ``lam`` with coefficient of variation ``cv``,
predictions ``lam_hat = lam * exp(eps)`` with ``eps ~ N(0, sigma2)``
independent of ``lam``, price ``p = margin * lam_hat`` and power-law demand
``c(p) ∝ p**-eta``. Under these assumptions the expected portfolio loss ratio
depends on the model only through the Pearson correlation ``rho`` between
``lam_hat`` and ``lam``.

All functions are pure and scalar. Expressions are evaluated in log space and
exponentiated last so the extreme corners of the parameter grid do not
overflow intermediate terms.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional

from .errors import DomainError

#: correlations in (1, 1 + RHO_CLAMP_TOL] are treated as exactly 1
RHO_CLAMP_TOL = 1e-9


def _check_rho(rho: float, name: str = "rho") -> float:
    rho = float(rho)
    if 1.0 < rho <= 1.0 + RHO_CLAMP_TOL:
        return 1.0
    if not (0.0 < rho <= 1.0):
        raise DomainError(f"{name} must lie in (0, 1], got {rho!r}")
    return rho


def _check_positive(value: float, name: str) -> float:
    value = float(value)
    if not value > 0.0 or math.isinf(value):
        raise DomainError(f"{name} must be a finite positive number, got {value!r}")
    return value


def _check_sigma2(sigma2: float) -> float:
    sigma2 = float(sigma2)
    if not sigma2 >= 0.0 or math.isinf(sigma2):
        raise DomainError(f"sigma2 must be a finite non-negative number, got {sigma2!r}")
    return sigma2


def _log_variance_ratio(rho: float, cv: float) -> float:
    """``ln((1 + rho^2/cv^2) / (rho^2 (1 + 1/cv^2)))``, i.e. the log of ``e^sigma2``."""
    inv_cv2 = cv**-2
    value = math.log1p(rho * rho * inv_cv2) - 2.0 * math.log(rho) - math.log1p(inv_cv2)
    # exactly 0 at rho == 1; guard the last-ulp negatives just below it
    return max(value, 0.0)


def rho_from_sigma2(sigma2: float, cv: float) -> float:
    """Correlation between predicted and true losses for log-error variance ``sigma2``.

    Args:
        sigma2: Variance of the log-space prediction error.
        cv: Coefficient of variation of true losses.

    Returns:
        Pearson correlation in (0, 1]; exactly 1 when ``sigma2 == 0``.

    Raises:
        DomainError: ``sigma2 < 0`` or ``cv <= 0``.
    """
    sigma2 = _check_sigma2(sigma2)
    cv = _check_positive(cv, "cv")
    # ln rho = -sigma2/2 - 1/2 ln(1 + cv^-2 (1 - e^-sigma2))
    log_rho = -0.5 * sigma2 - 0.5 * math.log1p(-math.expm1(-sigma2) * cv**-2)
    return math.exp(log_rho)


def sigma2_from_rho(rho: float, cv: float) -> float:
    """Log-error variance that produces correlation ``rho``; inverse of :func:`rho_from_sigma2`."""
    rho = _check_rho(rho)
    cv = _check_positive(cv, "cv")
    return _log_variance_ratio(rho, cv)


def expected_loss_ratio_from_sigma(sigma2: float, eta: float, margin: float = 1.0) -> float:
    """Expected loss ratio ``exp(sigma2 (2 eta - 1) / 2) / margin``."""
    sigma2 = _check_sigma2(sigma2)
    eta = _check_positive(eta, "eta")
    margin = _check_positive(margin, "margin")
    return math.exp(0.5 * sigma2 * (2.0 * eta - 1.0) - math.log(margin))


def loss_ratio_error(rho: float, cv: float, eta: float) -> float:
    """Fractional loss-ratio excess over the optimum ``1/margin`` caused by imperfect ``rho``.

    Zero for a perfect model; positive and decreasing in ``rho`` whenever
    ``eta > 1/2``. For ``eta < 1/2`` the sign flips (underpricing adverse
    selection is outweighed), which is reported rather than rejected.
    """
    rho = _check_rho(rho)
    cv = _check_positive(cv, "cv")
    eta = _check_positive(eta, "eta")
    inv_cv2 = cv**-2
    rho2 = rho * rho
    log_base = math.log1p(rho2 * inv_cv2) - math.log(rho2 + rho2 * inv_cv2)
    if rho == 1.0:
        log_base = 0.0
    return math.expm1(0.5 * (2.0 * eta - 1.0) * log_base)


def expected_loss_ratio(rho: float, cv: float, eta: float, margin: float = 1.0) -> float:
    """Expected portfolio loss ratio as a function of model correlation.

    ``LR = (1/M) * ((1 + rho^2/cv^2) / (rho^2 (1 + 1/cv^2))) ** ((2 eta - 1) / 2)``

    Computed as ``(1 + loss_ratio_error) / margin`` so the two quantities are
    exactly consistent.

    Args:
        rho: Pearson correlation of predicted vs true losses, in (0, 1].
        cv: Coefficient of variation of true losses.
        eta: Power-law price elasticity.
        margin: Margin factor M, price = M * predicted loss.
    """
    margin = _check_positive(margin, "margin")
    return (1.0 + loss_ratio_error(rho, cv, eta)) / margin


def expected_loss_ratio_freq_sev(
    rho_f: float,
    cv_f: float,
    rho_s: float,
    cv_s: float,
    eta: float,
    margin: float = 1.0,
) -> float:
    """Expected loss ratio when frequency and severity are modeled separately.

    The two models contribute independent multiplicative factors, one per
    component, each of the single-model form.
    """
    rho_f = _check_rho(rho_f, "rho_f")
    rho_s = _check_rho(rho_s, "rho_s")
    cv_f = _check_positive(cv_f, "cv_f")
    cv_s = _check_positive(cv_s, "cv_s")
    eta = _check_positive(eta, "eta")
    margin = _check_positive(margin, "margin")
    k = 0.5 * (2.0 * eta - 1.0)
    log_lr = k * _log_variance_ratio(rho_f, cv_f) + k * _log_variance_ratio(rho_s, cv_s)
    return math.exp(log_lr - math.log(margin))


def improvement_ratio(rho_old: float, rho_new: float, cv: float, eta: float) -> float:
    """``LR_new / LR_old`` when model correlation moves from ``rho_old`` to ``rho_new``.

    The margin cancels. Values below 1 are improvements.
    """
    rho_old = _check_rho(rho_old, "rho_old")
    rho_new = _check_rho(rho_new, "rho_new")
    cv = _check_positive(cv, "cv")
    eta = _check_positive(eta, "eta")
    inv_cv2 = cv**-2
    o2, n2 = rho_old * rho_old, rho_new * rho_new
    cross = n2 * o2 * inv_cv2
    log_base = math.log(o2 + cross) - math.log(n2 + cross)
    return math.exp(0.5 * (2.0 * eta - 1.0) * log_base)


# ---------------------------------------------------------------------------
# Typed wrappers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PopulationMoments:
    """Distribution summary of true expected losses."""

    cv: float
    mean_loss: float = 1.0

    def __post_init__(self):
        _check_positive(self.cv, "cv")
        _check_positive(self.mean_loss, "mean_loss")


@dataclass(frozen=True)
class ModelQuality:
    """Model accuracy as both correlation and log-error variance.

    Build with :meth:`from_rho` or :meth:`from_sigma2` so the two fields stay
    consistent for the population's ``cv``.
    """

    rho: float
    sigma2: float

    @classmethod
    def from_rho(cls, rho: float, cv: float) -> "ModelQuality":
        rho = _check_rho(rho)
        return cls(rho=rho, sigma2=sigma2_from_rho(rho, cv))

    @classmethod
    def from_sigma2(cls, sigma2: float, cv: float) -> "ModelQuality":
        return cls(rho=rho_from_sigma2(sigma2, cv), sigma2=_check_sigma2(sigma2))


@dataclass(frozen=True)
class MarketSpec:
    eta: float
    margin: float = 1.0

    def __post_init__(self):
        _check_positive(self.eta, "eta")
        _check_positive(self.margin, "margin")


@dataclass(frozen=True)
class FreqSevQuality:
    rho_f: float
    cv_f: float
    rho_s: float
    cv_s: float

    def __post_init__(self):
        _check_rho(self.rho_f, "rho_f")
        _check_rho(self.rho_s, "rho_s")
        _check_positive(self.cv_f, "cv_f")
        _check_positive(self.cv_s, "cv_s")

    @property
    def sigma2_total(self) -> float:
        return sigma2_from_rho(self.rho_f, self.cv_f) + sigma2_from_rho(self.rho_s, self.cv_s)


@dataclass(frozen=True)
class LossRatioPrediction:
    """Closed-form loss ratio together with the inputs that produced it.

    ``loss_ratio == (1 + elr) / market.margin`` holds exactly.
    """

    loss_ratio: float
    elr: float
    sigma2_implied: float
    market: MarketSpec
    population: Optional[PopulationMoments] = None
    quality: Optional[ModelQuality] = None
    freq_sev: Optional[FreqSevQuality] = None

    def to_dict(self) -> dict:
        out = {
            "loss_ratio": self.loss_ratio,
            "elr": self.elr,
            "sigma2_implied": self.sigma2_implied,
            "inputs": {"market": asdict(self.market)},
        }
        for key in ("population", "quality", "freq_sev"):
            value = getattr(self, key)
            if value is not None:
                out["inputs"][key] = asdict(value)
        return out


def predict(quality: ModelQuality, population: PopulationMoments, market: MarketSpec) -> LossRatioPrediction:
    """Loss ratio and Loss Ratio Error for a single loss model."""
    elr = loss_ratio_error(quality.rho, population.cv, market.eta)
    return LossRatioPrediction(
        loss_ratio=(1.0 + elr) / market.margin,
        elr=elr,
        sigma2_implied=quality.sigma2,
        market=market,
        population=population,
        quality=quality,
    )


def predict_freq_sev(fs: FreqSevQuality, market: MarketSpec) -> LossRatioPrediction:
    """Loss ratio for separate frequency and severity models."""
    lr = expected_loss_ratio_freq_sev(fs.rho_f, fs.cv_f, fs.rho_s, fs.cv_s, market.eta, market.margin)
    elr = lr * market.margin - 1.0
    return LossRatioPrediction(
        loss_ratio=(1.0 + elr) / market.margin,
        elr=elr,
        sigma2_implied=fs.sigma2_total,
        market=market,
        freq_sev=fs,
    )
