"""Monte Carlo portfolio simulator used as the oracle for the closed forms.

One simulated portfolio goes through these steps:

1. draw true expected losses from a unit-mean lognormal with the requested CV;
2. perturb them multiplicatively, ``lam_hat = lam * exp(eps)``;
3. quote ``p = margin * lam_hat``;
4. convert each customer independently with probability
   ``(p_min / p) ** eta`` (the cheapest quote converts surely);
5. the empirical loss ratio is total loss over total premium among converters.

Realized loss for a converted customer is its expected loss ``lam`` itself; no
claim-count or claim-size noise is layered on top.

Randomness is drawn from a PCG64 stream keyed by ``(seed, attempt)`` through
``numpy.random.SeedSequence``, so a config fully determines its outcome and
resampling attempts are independent of one another.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import formulas
from .errors import DomainError, EmptyInputError, InsufficientConversionsError

logger = logging.getLogger(__name__)

ErrorSampler = Callable[[np.ndarray, float, np.random.Generator], np.ndarray]
DemandModel = Callable[[np.ndarray], np.ndarray]


def attempt_rng(seed: int, attempt: int = 0) -> np.random.Generator:
    """Independent generator for resampling attempt ``attempt`` of ``seed``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), int(attempt)])))


def sample_true_losses(n: int, cv: float, rng: np.random.Generator) -> np.ndarray:
    """Lognormal expected losses with population mean 1 and coefficient of variation ``cv``."""
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    if not cv > 0:
        raise DomainError(f"cv must be positive, got {cv}")
    log_var = math.log1p(cv * cv)
    return rng.lognormal(mean=-0.5 * log_var, sigma=math.sqrt(log_var), size=n)


def apply_model_error(losses: np.ndarray, sigma2: float, rng: np.random.Generator) -> np.ndarray:
    """Predictions ``losses * exp(eps)`` with i.i.d. ``eps ~ N(0, sigma2)``."""
    if not sigma2 >= 0:
        raise DomainError(f"sigma2 must be non-negative, got {sigma2}")
    eps = rng.normal(0.0, math.sqrt(sigma2), size=len(losses))
    return losses * np.exp(eps)


def normal_errors(losses: np.ndarray, sigma2: float, rng: np.random.Generator) -> np.ndarray:
    return rng.normal(0.0, math.sqrt(sigma2), size=len(losses))


def conversion_probabilities(prices: np.ndarray, eta: float) -> np.ndarray:
    """Power-law conversion ``(p_min / p) ** eta``; the cheapest quote gets exactly 1."""
    prices = np.asarray(prices, dtype=float)
    if prices.size == 0:
        raise EmptyInputError("conversion_probabilities needs at least one price")
    if not np.all(prices > 0):
        raise DomainError("prices must be strictly positive")
    if not eta > 0:
        raise DomainError(f"eta must be positive, got {eta}")
    return (prices.min() / prices) ** eta


def empirical_loss_ratio(losses: np.ndarray, prices: np.ndarray, converted: np.ndarray) -> float:
    """Total loss over total premium among converted customers."""
    premium = float(np.sum(prices[converted]))
    if premium <= 0:
        raise EmptyInputError("no converted customers")
    return float(np.sum(losses[converted])) / premium


@dataclass
class PortfolioDraw:
    """Arrays behind one simulated portfolio, kept for diagnostics and demand fitting."""

    losses: np.ndarray
    predictions: np.ndarray
    prices: np.ndarray
    probabilities: np.ndarray
    converted: np.ndarray

    @property
    def n_converted(self) -> int:
        return int(np.count_nonzero(self.converted))

    @property
    def loss_ratio(self) -> float:
        return empirical_loss_ratio(self.losses, self.prices, self.converted)

    @property
    def realized_rho(self) -> float:
        return float(np.corrcoef(self.losses, self.predictions)[0, 1])


def draw_portfolio(
    n: int,
    cv: float,
    sigma2: float,
    eta: float,
    margin: float,
    rng: np.random.Generator,
    *,
    error_sampler: Optional[ErrorSampler] = None,
    demand: Optional[DemandModel] = None,
) -> PortfolioDraw:
    """Generate one portfolio.

    ``error_sampler(losses, sigma2, rng)`` replaces the normal log-error and
    ``demand(prices)`` replaces the power-law conversion curve; both default
    to the model assumptions. Draw order is losses, errors, then one uniform
    per customer in index order.
    """
    losses = sample_true_losses(n, cv, rng)
    if error_sampler is None:
        predictions = apply_model_error(losses, sigma2, rng)
    else:
        predictions = losses * np.exp(error_sampler(losses, sigma2, rng))
    prices = margin * predictions
    probs = conversion_probabilities(prices, eta) if demand is None else demand(prices)
    converted = rng.random(n) < probs
    return PortfolioDraw(losses, predictions, prices, probs, converted)


@dataclass(frozen=True)
class PortfolioConfig:
    """Inputs for one simulated validation run.

    ``target_rho`` is turned into an error variance through the correlation
    formula for the population ``cv``. A run resamples the whole portfolio
    with a fresh sub-seed until at least ``min_converted`` customers convert.
    """

    n_potential: int
    cv: float
    target_rho: float
    eta: float
    margin: float = 1.0
    seed: int = 0
    min_converted: int = 10_000
    max_resample_attempts: int = 20

    def __post_init__(self):
        if self.n_potential < 1 or self.min_converted < 1 or self.max_resample_attempts < 1:
            raise DomainError("n_potential, min_converted and max_resample_attempts must be positive")
        if self.n_potential < self.min_converted:
            raise DomainError(
                f"n_potential ({self.n_potential}) must be >= min_converted ({self.min_converted})"
            )
        if not 0 <= self.seed < 2**64:
            raise DomainError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        formulas.MarketSpec(self.eta, self.margin)
        formulas.PopulationMoments(self.cv)
        formulas.sigma2_from_rho(self.target_rho, self.cv)

    @property
    def sigma2(self) -> float:
        return formulas.sigma2_from_rho(self.target_rho, self.cv)

    @property
    def predicted_lr(self) -> float:
        return formulas.expected_loss_ratio(self.target_rho, self.cv, self.eta, self.margin)


@dataclass(frozen=True)
class SimulationOutcome:
    empirical_lr: float
    n_converted: int
    realized_rho: float
    attempts_used: int
    predicted_lr: float
    draw: Optional[PortfolioDraw] = field(default=None, repr=False, compare=False)

    @property
    def ape_percent(self) -> float:
        return abs(self.empirical_lr - self.predicted_lr) / self.empirical_lr * 100.0


def run_simulation(
    config: PortfolioConfig,
    *,
    error_sampler: Optional[ErrorSampler] = None,
    demand: Optional[DemandModel] = None,
    keep_draw: bool = False,
) -> SimulationOutcome:
    """Simulate a portfolio and compare its loss ratio to the closed form.

    Raises:
        InsufficientConversionsError: no attempt reached ``config.min_converted``.
    """
    sigma2 = config.sigma2
    best = 0
    for attempt in range(config.max_resample_attempts):
        draw = draw_portfolio(
            config.n_potential,
            config.cv,
            sigma2,
            config.eta,
            config.margin,
            attempt_rng(config.seed, attempt),
            error_sampler=error_sampler,
            demand=demand,
        )
        k = draw.n_converted
        best = max(best, k)
        if k >= config.min_converted:
            return SimulationOutcome(
                empirical_lr=draw.loss_ratio,
                n_converted=k,
                realized_rho=draw.realized_rho,
                attempts_used=attempt + 1,
                predicted_lr=config.predicted_lr,
                draw=draw if keep_draw else None,
            )
        logger.debug("seed %d attempt %d: %d conversions < %d", config.seed, attempt, k, config.min_converted)
    raise InsufficientConversionsError(
        f"only {best} conversions (need {config.min_converted}) after "
        f"{config.max_resample_attempts} attempts",
        best_n_converted=best,
        attempts=config.max_resample_attempts,
    )
