"""Residualize estimators on their diagnostic checks.

Given a baseline estimate and a vector of mean-zero diagnostic checks with a
consistent joint covariance, subtracting the implied regression of estimate
on checks yields an estimator that is first-order independent of any
reporting rule based on the checks, never less precise under the base model,
and minimax under bounded local misspecification among linear adjustments.
"""

from .core import (
    CovarianceDiagnostics,
    JointCovariance,
    MisspecBounds,
    OrthogonalityCheck,
    ResidualizationResult,
    adjusted_variance,
    compute_lambda,
    diagnostics,
    full_residualization,
    informativeness,
    misspec_bounds,
    orthogonality_stat,
    residualize,
    worst_case_bias,
)
from .covariance import InfluenceContributions, joint_covariance, se_of
from .rct import (
    EstimatorTriple,
    RctDataset,
    balance_stats,
    long_regression,
    residualized_estimator,
    short_estimator,
)

__version__ = "0.1.0"

__all__ = [
    "CovarianceDiagnostics",
    "EstimatorTriple",
    "InfluenceContributions",
    "JointCovariance",
    "MisspecBounds",
    "OrthogonalityCheck",
    "RctDataset",
    "ResidualizationResult",
    "adjusted_variance",
    "balance_stats",
    "compute_lambda",
    "diagnostics",
    "full_residualization",
    "informativeness",
    "joint_covariance",
    "long_regression",
    "misspec_bounds",
    "orthogonality_stat",
    "residualize",
    "residualized_estimator",
    "se_of",
    "short_estimator",
    "worst_case_bias",
]
