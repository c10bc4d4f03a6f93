"""Selective classification with optimal rejection rules and learned scores.

The package covers the full pipeline: parse a dataset, train a linear
classifier, learn an uncertainty score on held-out data, evaluate the
risk-coverage tradeoff, and solve the optimal accept/reject rule for a
given cost, risk, or coverage target.
"""

from .core import (
    MAE,
    ZERO_ONE_100,
    Dataset,
    LinearScorer,
    LossSpec,
    loss_from_name,
)
from .exceptions import (
    ConfigError,
    ContractError,
    DegenerateDataWarning,
    DomainError,
    InfeasibleTargetWarning,
    NotFittedError,
    NumericError,
    ParseError,
    RejoptError,
    ShapeError,
    SizeError,
    UndefinedRiskError,
)
from .metrics import (
    RiskCoverageCurve,
    aurc,
    rc_curve,
    risk_at_coverage,
    sele_loss,
    sele_proxy,
)
from .models import (
    BinarySVM,
    LogisticClassifier,
    MulticlassSVM,
    OrdinalSVM,
    load_model,
    make_classifier,
    save_model,
)
from .optimize import SolveReport, bmrm_solve, ridge_solve
from .rejection import (
    DiscreteRiskDistribution,
    RandomizedSelector,
    SelectorEvaluation,
    bounded_coverage_selector,
    bounded_improvement_selector,
    brute_force_selector,
    cost_based_selector,
    empirical_risk_distribution,
    evaluate_selector,
)
from .rng import Rng
from .scores import (
    BaselineScore,
    RegScore,
    SeleScore,
    TcpScore,
    load_score,
    make_score,
    save_score,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "BaselineScore",
    "BinarySVM",
    "ConfigError",
    "ContractError",
    "Dataset",
    "DegenerateDataWarning",
    "DiscreteRiskDistribution",
    "DomainError",
    "InfeasibleTargetWarning",
    "LinearScorer",
    "LogisticClassifier",
    "LossSpec",
    "MAE",
    "MulticlassSVM",
    "NotFittedError",
    "NumericError",
    "OrdinalSVM",
    "ParseError",
    "RandomizedSelector",
    "RegScore",
    "RejoptError",
    "RiskCoverageCurve",
    "Rng",
    "SeleScore",
    "SelectorEvaluation",
    "ShapeError",
    "SizeError",
    "SolveReport",
    "TcpScore",
    "UndefinedRiskError",
    "ZERO_ONE_100",
    "aurc",
    "bmrm_solve",
    "bounded_coverage_selector",
    "bounded_improvement_selector",
    "brute_force_selector",
    "cost_based_selector",
    "empirical_risk_distribution",
    "evaluate_selector",
    "load_model",
    "load_score",
    "loss_from_name",
    "make_classifier",
    "make_score",
    "rc_curve",
    "ridge_solve",
    "risk_at_coverage",
    "save_model",
    "save_score",
    "sele_loss",
    "sele_proxy",
]
