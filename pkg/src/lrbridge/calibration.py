"""Implied demand elasticity from past model deployments, and forward forecasts.

Given an observed loss ratio, pricing margin and model correlation for a
product line, the loss-ratio formula can be solved for ``eta`` in closed form:

    eta = 1/2 + ln(LR * M) / sigma2

Per-deployment estimates are pooled with an unweighted mean and a Student-t
interval.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np
from scipy import optimize, stats

from . import formulas
from .errors import DegenerateInversionError, DomainError, EmptyInputError


@dataclass(frozen=True)
class DeploymentRecord:
    observed_lr: float
    margin: float
    rho: float
    cv: float
    label: str = ""

    def __post_init__(self):
        if not self.observed_lr > 0 or not self.margin > 0:
            raise DomainError(f"{self._name()}: observed_lr and margin must be positive")
        if not 0 < self.rho <= 1:
            raise DomainError(f"{self._name()}: rho must lie in (0, 1], got {self.rho}")
        if not self.cv > 0:
            raise DomainError(f"{self._name()}: cv must be positive, got {self.cv}")

    def _name(self) -> str:
        return f"deployment {self.label!r}" if self.label else "deployment"


@dataclass(frozen=True)
class ElasticityEstimate:
    eta_hat: float
    ci_low: float
    ci_high: float
    n_deployments: int
    per_deployment_etas: tuple = ()
    confidence: float = 0.95

    @property
    def degenerate_ci(self) -> bool:
        """True when there is a single deployment and no interval can be formed."""
        return self.n_deployments < 2

    def to_dict(self) -> dict:
        return {
            "eta_hat": self.eta_hat,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "confidence": self.confidence,
            "n_deployments": self.n_deployments,
            "per_deployment_etas": list(self.per_deployment_etas),
            "degenerate_ci": self.degenerate_ci,
        }


def _sigma2_for(record: DeploymentRecord) -> float:
    if record.rho >= 1.0:
        raise DegenerateInversionError(
            f"{record._name()}: rho = 1 means zero error variance, elasticity is not identifiable"
        )
    return formulas.sigma2_from_rho(record.rho, record.cv)


def implied_elasticity(record: DeploymentRecord) -> float:
    """Elasticity that makes the closed form reproduce ``record.observed_lr``."""
    sigma2 = _sigma2_for(record)
    return 0.5 + math.log(record.observed_lr * record.margin) / sigma2


def implied_elasticity_numeric(
    record: DeploymentRecord,
    lo: float = 1e-9,
    hi: float = 50.0,
    xtol: float = 1e-13,
) -> float:
    """Bracketing root-find for the implied elasticity.

    Independent of the closed-form inversion; intended for demand families
    where no closed form exists. The search is over ``eta`` in ``[lo, hi]``
    on the log loss ratio, which is linear in ``eta`` here.
    """
    _sigma2_for(record)
    target = math.log(record.observed_lr)

    def gap(eta):
        return math.log(formulas.expected_loss_ratio(record.rho, record.cv, eta, record.margin)) - target

    g_lo, g_hi = gap(lo), gap(hi)
    if g_lo * g_hi > 0:
        raise DomainError(f"{record._name()}: implied elasticity outside [{lo}, {hi}]")
    return optimize.brentq(gap, lo, hi, xtol=xtol, rtol=4 * np.finfo(float).eps)


def aggregate_elasticity(records: Iterable[DeploymentRecord], confidence: float = 0.95) -> ElasticityEstimate:
    """Pool per-deployment implied elasticities into a point estimate and t-interval."""
    records = list(records)
    if not records:
        raise EmptyInputError("at least one deployment record is required")
    if not 0 < confidence < 1:
        raise DomainError(f"confidence must lie in (0, 1), got {confidence}")
    etas = tuple(implied_elasticity(r) for r in records)
    n = len(etas)
    eta_hat = math.fsum(etas) / n
    if n == 1:
        return ElasticityEstimate(eta_hat, eta_hat, eta_hat, 1, etas, confidence)
    sd = float(np.std(etas, ddof=1))
    half = stats.t.ppf(0.5 * (1 + confidence), n - 1) * sd / math.sqrt(n)
    return ElasticityEstimate(eta_hat, eta_hat - half, eta_hat + half, n, etas, confidence)


@dataclass(frozen=True)
class ImprovementForecast:
    current: formulas.LossRatioPrediction
    target: formulas.LossRatioPrediction
    ratio: float
    ratio_ci: tuple

    def to_dict(self) -> dict:
        return {
            "current": self.current.to_dict(),
            "target": self.target.to_dict(),
            "ratio": self.ratio,
            "ratio_ci": list(self.ratio_ci),
        }


def forecast_improvement(
    estimate: ElasticityEstimate,
    population: formulas.PopulationMoments,
    margin: float,
    rho_current: float,
    rho_target: float,
) -> ImprovementForecast:
    """Loss ratios before and after a model change, at the calibrated elasticity.

    ``ratio_ci`` comes from evaluating the ratio at the interval endpoints of
    ``eta``; the ratio is monotone in ``eta`` so the endpoints bracket it.
    """
    def at(eta, rho):
        return formulas.predict(
            formulas.ModelQuality.from_rho(rho, population.cv), population, formulas.MarketSpec(eta, margin)
        )

    current = at(estimate.eta_hat, rho_current)
    target = at(estimate.eta_hat, rho_target)
    ratio = formulas.improvement_ratio(rho_current, rho_target, population.cv, estimate.eta_hat)
    # ratio(eta) = base ** (eta - 1/2); this form also covers interval ends at eta <= 0
    base = formulas.improvement_ratio(rho_current, rho_target, population.cv, 1.5)
    ends = [base ** (eta - 0.5) for eta in (estimate.ci_low, estimate.ci_high)]
    return ImprovementForecast(current, target, ratio, (min(ends + [ratio]), max(ends + [ratio])))
