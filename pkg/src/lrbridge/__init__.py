"""Closed-form expected loss ratios for imperfect pricing models, with a Monte
Carlo harness to check them."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    DegenerateInversionError,
    DomainError,
    EmptyInputError,
    InputParseError,
    InsufficientConversionsError,
    LRBridgeError,
)
from .formulas import (  # noqa: E402
    FreqSevQuality,
    LossRatioPrediction,
    MarketSpec,
    ModelQuality,
    PopulationMoments,
    expected_loss_ratio,
    expected_loss_ratio_freq_sev,
    expected_loss_ratio_from_sigma,
    improvement_ratio,
    loss_ratio_error,
    predict,
    predict_freq_sev,
    rho_from_sigma2,
    sigma2_from_rho,
)
from .calibration import (  # noqa: E402
    DeploymentRecord,
    ElasticityEstimate,
    aggregate_elasticity,
    forecast_improvement,
    implied_elasticity,
)
from .simulation import PortfolioConfig, SimulationOutcome, run_simulation  # noqa: E402

__all__ = [
    "__version__",
    "LRBridgeError", "DomainError", "DegenerateInversionError", "EmptyInputError",
    "InputParseError", "InsufficientConversionsError",
    "PopulationMoments", "ModelQuality", "MarketSpec", "FreqSevQuality", "LossRatioPrediction",
    "rho_from_sigma2", "sigma2_from_rho", "expected_loss_ratio", "expected_loss_ratio_from_sigma",
    "expected_loss_ratio_freq_sev", "loss_ratio_error", "improvement_ratio", "predict", "predict_freq_sev",
    "DeploymentRecord", "ElasticityEstimate", "implied_elasticity", "aggregate_elasticity",
    "forecast_improvement",
    "PortfolioConfig", "SimulationOutcome", "run_simulation",
]
