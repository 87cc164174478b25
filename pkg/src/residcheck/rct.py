"""Difference-in-means, balance checks, and adjusted estimators for an RCT.

Instantiates the running randomized-trial case: the baseline estimator is
the difference in mean outcomes across arms, the diagnostic check is the
vector of covariate mean differences (the balance table), the conventional
alternative is the coefficient on treatment from the regression of the
outcome on treatment and covariates, and the residualized estimator adjusts
the difference in means by the variance-minimizing coefficient implied by
the joint covariance of estimate and checks.

All estimators are computed on within-stratum demeaned data when stratum
labels are supplied (mirroring block-randomized designs with fixed effects)
and on the raw data otherwise; without strata the regression forms reduce
exactly to the textbook formulas

    c_short = mean(Y | T=1) - mean(Y | T=0)
    gamma_k = mean(X_k | T=1) - mean(X_k | T=0)

with influence contributions T (Y - avg1) / pi - (1 - T)(Y - avg0) / (1 - pi)
at the realized treated share pi.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg as sla

from .core import JointCovariance, adjusted_variance, compute_lambda
from .covariance import InfluenceContributions, joint_covariance, se_of
from .errors import DimensionMismatch, EmptyArm, RankDeficientDesign

# Relative threshold on the R factor diagonal below which the design is
# treated as rank deficient rather than silently dropping columns.
_RANK_RTOL = 1e-10


@dataclass(frozen=True)
class RctDataset:
    """Outcome vector, binary treatment, covariate matrix, optional strata."""

    outcome: np.ndarray
    treatment: np.ndarray
    covariates: np.ndarray
    strata: np.ndarray | None = None

    def __post_init__(self):
        y = np.asarray(self.outcome, dtype=float)
        t = np.asarray(self.treatment)
        x = np.asarray(self.covariates, dtype=float)
        if x.ndim == 1:
            x = x.reshape(-1, 1)
        n = y.shape[0]
        if y.ndim != 1 or t.shape != (n,) or x.shape[0] != n:
            raise DimensionMismatch(
                f"outcome ({y.shape}), treatment ({t.shape}) and covariates "
                f"({x.shape}) do not align"
            )
        if not np.all(np.isfinite(y)) or not np.all(np.isfinite(x)):
            raise DimensionMismatch("outcome or covariates contain non-finite values")
        t_float = t.astype(float)
        if not np.all((t_float == 0.0) | (t_float == 1.0)):
            raise DimensionMismatch("treatment values must be 0 or 1")
        n1 = int(t_float.sum())
        if n1 < 2 or n - n1 < 2:
            raise EmptyArm(f"each arm needs at least 2 units, got {n1} treated of {n}")
        if self.strata is not None:
            strata = np.asarray(self.strata)
            if strata.shape != (n,):
                raise DimensionMismatch(f"strata must have length {n}")
            object.__setattr__(self, "strata", strata)
        object.__setattr__(self, "outcome", y)
        object.__setattr__(self, "treatment", t_float)
        object.__setattr__(self, "covariates", x)

    @property
    def n(self) -> int:
        return self.outcome.shape[0]

    @property
    def p_gamma(self) -> int:
        return self.covariates.shape[1]


@dataclass(frozen=True)
class EstimatorTriple:
    """Short, long, and residualized estimates with their shared ingredients."""

    c_short: float
    c_long: float
    c_resid: float
    beta_long: np.ndarray
    beta_resid: np.ndarray
    gamma_hat: np.ndarray
    sigma: JointCovariance

    @property
    def se_short(self) -> float:
        return se_of(self.sigma, "baseline")

    @property
    def se_resid(self) -> float:
        return se_of(self.sigma, "residualized")

    @property
    def se_long(self) -> float:
        return float(np.sqrt(adjusted_variance(self.sigma, self.beta_long) / self.sigma.n))


def _demean(values: np.ndarray, strata: np.ndarray | None) -> np.ndarray:
    """Subtract global or within-stratum means (columnwise for 2-d input)."""
    if strata is None:
        return values - values.mean(axis=0)
    _, inverse = np.unique(strata, return_inverse=True)
    counts = np.bincount(inverse).astype(float)
    flat = values if values.ndim == 2 else values[:, None]
    sums = np.zeros((counts.shape[0], flat.shape[1]))
    np.add.at(sums, inverse, flat)
    centered = flat - (sums / counts[:, None])[inverse]
    return centered if values.ndim == 2 else centered[:, 0]


def _slope_and_influence(t_c: np.ndarray, y_c: np.ndarray):
    """Slope of demeaned y on demeaned t plus its influence contributions."""
    denom = float(t_c @ t_c) / t_c.shape[0]
    if denom <= 0.0:
        raise EmptyArm("treatment indicator has no within-stratum variation")
    slope = float(t_c @ y_c) / (t_c @ t_c)
    return slope, t_c * (y_c - slope * t_c) / denom


def short_estimator(data: RctDataset) -> tuple[float, np.ndarray]:
    """Difference in mean outcomes and its influence contributions."""
    t_c = _demean(data.treatment, data.strata)
    y_c = _demean(data.outcome, data.strata)
    return _slope_and_influence(t_c, y_c)


def balance_stats(data: RctDataset) -> tuple[np.ndarray, np.ndarray]:
    """Covariate mean differences across arms and their contributions.

    Returns ``(gamma_hat, contributions)`` with contributions of shape
    (n, p).
    """
    t_c = _demean(data.treatment, data.strata)
    x_c = _demean(data.covariates, data.strata)
    gamma = np.empty(data.p_gamma)
    contribs = np.empty((data.n, data.p_gamma))
    for k in range(data.p_gamma):
        gamma[k], contribs[:, k] = _slope_and_influence(t_c, x_c[:, k])
    return gamma, contribs


def long_regression(data: RctDataset) -> tuple[float, np.ndarray, np.ndarray]:
    """Coefficient on treatment from the regression on treatment and covariates.

    Returns ``(c_long, beta_long, contributions)`` where contributions are
    the OLS influence rows for the treatment coefficient. The design is
    factored by QR; a rank-deficient design is an error, never repaired by
    dropping columns.
    """
    t_c = _demean(data.treatment, data.strata)
    x_c = _demean(data.covariates, data.strata)
    y_c = _demean(data.outcome, data.strata)
    design = np.column_stack([t_c, x_c])
    q, r = np.linalg.qr(design)
    diag = np.abs(np.diag(r))
    if diag.min() <= _RANK_RTOL * diag.max():
        raise RankDeficientDesign(
            "design matrix [treatment, covariates] is rank deficient"
        )
    coef = sla.solve_triangular(r, q.T @ y_c)
    resid = y_c - design @ coef
    gram = design.T @ design / data.n
    weights = design @ np.linalg.solve(gram, np.eye(gram.shape[0])[:, 0])
    return float(coef[0]), coef[1:], weights * resid


def residualized_estimator(
    data: RctDataset, cluster_ids: np.ndarray | None = None
) -> EstimatorTriple:
    """Full pipeline: short, long, and covariance-residualized estimators.

    The adjustment coefficient beta_resid solves the check-covariance system
    from the stacked influence contributions of the difference in means and
    the balance statistics; covariance-validation errors propagate.
    """
    c_short, contrib_c = short_estimator(data)
    gamma_hat, contrib_g = balance_stats(data)
    stacked = InfluenceContributions(
        np.column_stack([contrib_c, contrib_g]), cluster_ids=cluster_ids
    )
    sigma = joint_covariance(stacked)
    beta_resid = compute_lambda(sigma)
    c_long, beta_long, _ = long_regression(data)
    return EstimatorTriple(
        c_short=c_short,
        c_long=c_long,
        c_resid=c_short - float(beta_resid @ gamma_hat),
        beta_long=beta_long,
        beta_resid=beta_resid,
        gamma_hat=gamma_hat,
        sigma=sigma,
    )
