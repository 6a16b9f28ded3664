"""Assumption-violation scenarios and degradation sweeps.

Each scenario breaks one modelling assumption while holding the rest at the
baseline (rho 0.7, cv 2.0, eta 1.2):

* ``HeavyTail(df)``: Student-t log errors rescaled to the target variance.
* ``SkewedNormal(alpha)``: skew-normal log errors with shape ``alpha``,
  centred and rescaled to the target variance. ``alpha`` is the shape
  parameter, not the moment skewness (which stays below 1 for any alpha).
* ``ErrorLossCorrelation(rho_el)``: log errors linearly dependent on the
  standardized true loss. ``rho_el`` is the correlation between the residual
  ``log(lam / lam_hat) = -eps`` and ``lam``, so positive values mean
  high-risk customers are systematically under-predicted.
* ``DemandMismatch(family)``: conversions follow an exponential, logistic or
  linear curve; the closed form is then evaluated at the elasticity a
  practitioner would fit to those conversion probabilities.

The error scenarios are scored against the closed form at the baseline
parameters; the demand scenario uses the fitted elasticity.
"""

from __future__ import annotations

import logging
import math
import zlib
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
from scipy import optimize, stats

from . import formulas
from .errors import DomainError, EmptyInputError, InsufficientConversionsError
from .experiments import confidence_interval, derive_seed, parallel_map
from .simulation import PortfolioConfig, run_simulation

logger = logging.getLogger(__name__)

DEMAND_FLOOR = 1e-6
DEMAND_FAMILIES = ("power", "exponential", "logistic", "linear")
SWEEP_KINDS = ("control", "heavy-tail", "skew", "error-corr", "demand")
MIN_PORTFOLIO, MAX_PORTFOLIO = 200_000, 500_000


@dataclass(frozen=True)
class Baseline:
    rho: float = 0.7
    cv: float = 2.0
    eta: float = 1.2
    margin: float = 1.0


@dataclass(frozen=True)
class NoViolation:
    """Control scenario: every assumption holds."""


@dataclass(frozen=True)
class HeavyTail:
    df: float

    def __post_init__(self):
        if not self.df > 2:
            raise DomainError(f"heavy-tail df must exceed 2 for finite variance, got {self.df}")


@dataclass(frozen=True)
class SkewedNormal:
    alpha: float

    def __post_init__(self):
        if not self.alpha >= 0:
            raise DomainError(f"skew-normal shape must be >= 0, got {self.alpha}")


@dataclass(frozen=True)
class ErrorLossCorrelation:
    rho_el: float

    def __post_init__(self):
        if not 0 <= self.rho_el < 0.5:
            raise DomainError(f"error-loss correlation must lie in [0, 0.5), got {self.rho_el}")


@dataclass(frozen=True)
class DemandMismatch:
    family: str

    def __post_init__(self):
        if self.family not in DEMAND_FAMILIES:
            raise DomainError(f"unknown demand family {self.family!r}; expected one of {DEMAND_FAMILIES}")


Violation = Union[NoViolation, HeavyTail, SkewedNormal, ErrorLossCorrelation, DemandMismatch]


def standardize(x: np.ndarray) -> np.ndarray:
    """Zero sample mean, unit sample variance."""
    x = np.asarray(x, dtype=float)
    return (x - x.mean()) / x.std()


def sample_violated_errors(
    scenario: Violation,
    sigma2: float,
    standardized_losses: Optional[np.ndarray],
    rng: np.random.Generator,
    n: Optional[int] = None,
) -> np.ndarray:
    """Log-space prediction errors with variance ``sigma2`` under a violated assumption.

    Args:
        scenario: The violation. Demand scenarios and the control use normal errors.
        sigma2: Target error variance (from the correlation formula).
        standardized_losses: True losses scaled to zero mean and unit variance.
            Required for ``ErrorLossCorrelation``; otherwise only its length is used.
        rng: Random stream.
        n: Sample size when ``standardized_losses`` is not given.
    """
    if not sigma2 > 0:
        raise DomainError(f"sigma2 must be positive, got {sigma2}")
    if n is None:
        if standardized_losses is None:
            raise DomainError("pass standardized_losses or n")
        n = len(standardized_losses)
    sd = math.sqrt(sigma2)
    if isinstance(scenario, HeavyTail):
        return rng.standard_t(scenario.df, size=n) * sd * math.sqrt((scenario.df - 2.0) / scenario.df)
    if isinstance(scenario, SkewedNormal):
        # X = delta |Z0| + sqrt(1 - delta^2) Z1 is skew-normal with shape alpha
        delta = scenario.alpha / math.sqrt(1.0 + scenario.alpha**2)
        z0 = rng.standard_normal(n)
        z1 = rng.standard_normal(n)
        x = delta * np.abs(z0) + math.sqrt(1.0 - delta * delta) * z1
        mean = delta * math.sqrt(2.0 / math.pi)
        return (x - mean) / math.sqrt(1.0 - mean * mean) * sd
    if isinstance(scenario, ErrorLossCorrelation):
        if standardized_losses is None:
            raise DomainError("ErrorLossCorrelation needs standardized_losses")
        r = scenario.rho_el
        return -r * sd * standardized_losses + math.sqrt(1.0 - r * r) * sd * rng.standard_normal(n)
    return rng.normal(0.0, sd, size=n)


# ---------------------------------------------------------------------------
# Demand curves
# ---------------------------------------------------------------------------


def _logistic_log_prob(prices, p_min, p_mid, s):
    # log of (1 + e^{s(p_min - p_mid)}) / (1 + e^{s(p - p_mid)}), overflow-safe
    return np.logaddexp(0.0, s * (p_min - p_mid)) - np.logaddexp(0.0, s * (np.asarray(prices) - p_mid))


def _solve_logistic_steepness(p_min, p_mid, p_ref, log_target):
    def gap(s):
        return float(_logistic_log_prob(p_ref, p_min, p_mid, s)) - log_target

    hi = 1.0 / (p_ref - p_mid)
    while gap(hi) > 0:
        hi *= 2.0
    return optimize.brentq(gap, 0.0, hi, xtol=1e-14 * hi)


def generate_alternative_demand(
    family: str,
    prices: np.ndarray,
    eta_reference: float,
    floor: float = DEMAND_FLOOR,
) -> np.ndarray:
    """Conversion probabilities under an alternative "true" demand curve.

    Every family is anchored so the cheapest quote converts with probability
    1 and is floored at ``floor``. Calibration against the power law
    ``(p_min / p) ** eta_reference``:

    * exponential ``exp(-k (p - p_min))``: same conversion at the median price;
    * logistic: midpoint at the power law's half-conversion price
      ``p_min * 2 ** (1 / eta)``, steepness so the median price matches;
    * linear ``1 - m (p - p_min)``: falls to ``floor`` at the highest price.
    """
    prices = np.asarray(prices, dtype=float)
    if prices.size == 0:
        raise EmptyInputError("prices must be non-empty")
    if not np.all(prices > 0):
        raise DomainError("prices must be strictly positive")
    if family not in DEMAND_FAMILIES:
        raise DomainError(f"unknown demand family {family!r}")
    p_min, p_med, p_max = prices.min(), float(np.median(prices)), prices.max()
    if family == "power" or p_max == p_min:
        probs = (p_min / prices) ** eta_reference
        return probs if family == "power" else np.maximum(probs, floor)
    if family == "linear":
        m = (1.0 - floor) / (p_max - p_min)
        return np.clip(1.0 - m * (prices - p_min), floor, 1.0)

    log_target = -eta_reference * math.log(p_med / p_min)
    if family == "exponential":
        if p_med == p_min:
            return np.ones_like(prices)
        k = -log_target / (p_med - p_min)
        log_c = -k * (prices - p_min)
    else:
        p_mid = p_min * 2.0 ** (1.0 / eta_reference)
        if p_med <= p_mid:
            p_mid = 0.5 * (p_min + p_med)
        if p_med == p_min:
            return np.ones_like(prices)
        s = _solve_logistic_steepness(p_min, p_mid, p_med, log_target)
        log_c = _logistic_log_prob(prices, p_min, p_mid, s)
    return np.clip(np.exp(log_c), floor, 1.0)


@dataclass(frozen=True)
class DemandFit:
    eta_hat: float
    fit_r2: float
    family: str = "power"
    n_points: int = 0


def fit_power_law_eta(prices: np.ndarray, probabilities: np.ndarray, family: str = "power") -> DemandFit:
    """Least-squares power-law fit: regress ``ln c`` on ``ln p``, ``eta_hat = -slope``."""
    prices = np.asarray(prices, dtype=float)
    probabilities = np.asarray(probabilities, dtype=float)
    if prices.shape != probabilities.shape or prices.size < 2:
        raise DomainError("need at least two (price, probability) pairs of equal length")
    if not (np.all(prices > 0) and np.all(probabilities > 0)):
        raise DomainError("prices and probabilities must be strictly positive for a log-log fit")
    x = np.log(prices)
    if np.ptp(x) == 0:
        raise DomainError("degenerate fit: all prices are equal")
    res = stats.linregress(x, np.log(probabilities))
    r2 = float(res.rvalue**2) if np.isfinite(res.rvalue) else 0.0
    return DemandFit(eta_hat=float(-res.slope), fit_r2=min(max(r2, 0.0), 1.0), family=family, n_points=int(x.size))


def fit_observed_demand(prices: np.ndarray, probabilities: np.ndarray, family: str, floor: float = DEMAND_FLOOR) -> DemandFit:
    """Fit on the quotes whose conversion probability sits above the floor."""
    keep = probabilities > floor
    return fit_power_law_eta(prices[keep], probabilities[keep], family)


# ---------------------------------------------------------------------------
# Sweeps
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DegradationPoint:
    violation_parameter: Union[float, str]
    mape_mean: float
    ci_low: float
    ci_high: float
    n_reps: int
    kind: str = ""
    apes: tuple = field(default=(), repr=False)
    fitted_eta_mean: Optional[float] = None


def make_violation(kind: str, parameter) -> Violation:
    if kind == "control":
        return NoViolation()
    if kind == "heavy-tail":
        return HeavyTail(float(parameter))
    if kind == "skew":
        return SkewedNormal(float(parameter))
    if kind == "error-corr":
        return ErrorLossCorrelation(float(parameter))
    if kind == "demand":
        return DemandMismatch(str(parameter))
    raise DomainError(f"unknown violation kind {kind!r}; expected one of {SWEEP_KINDS}")


def _kind_key(kind: str) -> int:
    return zlib.crc32(kind.encode("utf-8"))


def simulate_violation(
    violation: Violation,
    baseline: Baseline,
    portfolio_size: int,
    seed: int,
    min_converted: int = 1,
    max_resample_attempts: int = 20,
):
    """One replication: returns ``(ape_percent, empirical_lr, predicted_lr, fitted_eta or None)``."""
    config = PortfolioConfig(
        n_potential=portfolio_size,
        cv=baseline.cv,
        target_rho=baseline.rho,
        eta=baseline.eta,
        margin=baseline.margin,
        seed=seed,
        min_converted=min_converted,
        max_resample_attempts=max_resample_attempts,
    )
    error_sampler = None
    demand = None
    if isinstance(violation, (HeavyTail, SkewedNormal, ErrorLossCorrelation)):
        def error_sampler(losses, sigma2, rng):
            z = standardize(losses) if isinstance(violation, ErrorLossCorrelation) else None
            return sample_violated_errors(violation, sigma2, z, rng, n=len(losses))
    elif isinstance(violation, DemandMismatch):
        def demand(prices):
            return generate_alternative_demand(violation.family, prices, baseline.eta)

    outcome = run_simulation(config, error_sampler=error_sampler, demand=demand, keep_draw=demand is not None)
    fitted = None
    predicted = outcome.predicted_lr
    if demand is not None:
        draw = outcome.draw
        fit = fit_observed_demand(draw.prices, draw.probabilities, violation.family)
        fitted = fit.eta_hat
        # the fitted elasticity may leave the model's eta > 0 domain
        predicted = formulas.expected_loss_ratio_from_sigma(config.sigma2, max(fitted, 1e-12), baseline.margin)
    ape = abs(outcome.empirical_lr - predicted) / outcome.empirical_lr * 100.0
    return ape, outcome.empirical_lr, predicted, fitted


def _replicate(task):
    try:
        return simulate_violation(*task)
    except InsufficientConversionsError as exc:
        raise InsufficientConversionsError(
            f"{task[0]!r}: {exc}", exc.best_n_converted, exc.attempts
        ) from exc


def run_violation_sweep(
    kind: str,
    parameter_grid: Sequence,
    reps: int = 10,
    portfolio_size: int = MIN_PORTFOLIO,
    *,
    baseline: Baseline = Baseline(),
    base_seed: int = 0,
    parallelism: int = 1,
    min_converted: int = 1,
    max_resample_attempts: int = 20,
    confidence: float = 0.95,
) -> list:
    """MAPE of the closed form against simulation along a violation-severity grid.

    Each ``(grid value, replication)`` pair runs on its own derived seed, so
    results do not depend on execution order or ``parallelism``.
    """
    if not MIN_PORTFOLIO <= portfolio_size <= MAX_PORTFOLIO:
        raise DomainError(f"portfolio_size must lie in [{MIN_PORTFOLIO}, {MAX_PORTFOLIO}], got {portfolio_size}")
    if reps < 2:
        raise DomainError("reps must be >= 2 to form a confidence interval")
    grid = list(parameter_grid)
    if not grid:
        raise EmptyInputError("parameter_grid is empty")
    violations = [make_violation(kind, value) for value in grid]
    tasks = [
        (v, baseline, portfolio_size, derive_seed(base_seed, _kind_key(kind), i, rep), min_converted, max_resample_attempts)
        for i, v in enumerate(violations)
        for rep in range(reps)
    ]
    results = parallel_map(_replicate, tasks, parallelism)
    points = []
    for i, value in enumerate(grid):
        chunk = results[i * reps:(i + 1) * reps]
        apes = tuple(r[0] for r in chunk)
        low, high, mean = confidence_interval(apes, confidence)
        fitted = [r[3] for r in chunk if r[3] is not None]
        points.append(
            DegradationPoint(
                violation_parameter=value,
                mape_mean=mean,
                ci_low=low,
                ci_high=high,
                n_reps=reps,
                kind=kind,
                apes=apes,
                fitted_eta_mean=float(np.mean(fitted)) if fitted else None,
            )
        )
        logger.info("%s %s: MAPE %.2f%% [%.2f, %.2f]", kind, value, mean, low, high)
    return points
