"""Joint covariance estimation from per-observation influence contributions.

The estimator and each check are assumed asymptotically linear, so their
joint per-observation covariance is estimated from the stacked contribution
matrix with column 0 holding the estimator's contributions and columns
1..p the checks'. Contributions are demeaned before forming outer products:
plug-in influence estimates have exact mean zero only asymptotically, and
demeaning removes the O_p(n^{-1/2}) mean without changing the limit.

Conventions: divide by n (not n - 1), matching the population definitions;
the cluster-robust variant sums contributions within clusters first.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from .core import JointCovariance, informativeness
from .errors import DegenerateResidualVariance, DimensionMismatch, TooFewClusters


@dataclass(frozen=True)
class InfluenceContributions:
    """n x (1 + p) matrix of influence values, with optional cluster labels."""

    values: np.ndarray
    cluster_ids: np.ndarray | None = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2 or values.shape[1] < 2:
            raise DimensionMismatch(
                "contributions must be a 2-d array with at least two columns "
                "(estimator plus one check)"
            )
        if not np.all(np.isfinite(values)):
            raise DimensionMismatch("contributions contain non-finite values")
        n, k = values.shape
        p = k - 1
        if n < p + 2:
            # With n < p + 2 the assembled (1+p)-block covariance cannot be
            # strictly positive definite.
            raise DegenerateResidualVariance(
                f"need at least p + 2 = {p + 2} observations for a positive "
                f"definite joint covariance, got {n}"
            )
        if self.cluster_ids is not None:
            cluster_ids = np.asarray(self.cluster_ids)
            if cluster_ids.shape != (n,):
                raise DimensionMismatch(
                    f"cluster_ids must have length {n}, got shape {cluster_ids.shape}"
                )
            object.__setattr__(self, "cluster_ids", cluster_ids)
        object.__setattr__(self, "values", values)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p_gamma(self) -> int:
        return self.values.shape[1] - 1


def joint_covariance(contrib: InfluenceContributions) -> JointCovariance:
    """Estimate the per-observation joint covariance of (c_hat, gamma_hat).

    i.i.d.: Sigma_hat = (1/n) sum_i psi_i psi_i' of the demeaned rows.
    Clustered: Sigma_hat = (1/n) sum_g S_g S_g' with S_g the within-cluster
    sum of demeaned rows.

    The result is validated as a :class:`JointCovariance` and the usual
    validation errors propagate (singular check block, degenerate residual
    variance).
    """
    psi = contrib.values - contrib.values.mean(axis=0)
    n = contrib.n
    if contrib.cluster_ids is None:
        sigma = psi.T @ psi / n
    else:
        _, inverse = np.unique(contrib.cluster_ids, return_inverse=True)
        n_clusters = int(inverse.max()) + 1
        if n_clusters < contrib.p_gamma + 2:
            raise TooFewClusters(
                f"need at least p + 2 = {contrib.p_gamma + 2} clusters, got {n_clusters}"
            )
        sums = np.zeros((n_clusters, psi.shape[1]))
        np.add.at(sums, inverse, psi)
        sigma = sums.T @ sums / n
    return JointCovariance(
        sigma_c_sq=sigma[0, 0],
        sigma_c_gamma=sigma[0, 1:],
        sigma_gamma_gamma=sigma[1:, 1:],
        n=n,
    )


def se_of(sigma: JointCovariance, which: Literal["baseline", "residualized"]) -> float:
    """Standard error sqrt(variance / n) for the chosen estimator."""
    if which == "baseline":
        var = sigma.sigma_c_sq
    elif which == "residualized":
        var = sigma.sigma_c_sq * (1.0 - informativeness(sigma))
    else:
        raise ValueError(f"which must be 'baseline' or 'residualized', got {which!r}")
    return float(np.sqrt(var / sigma.n))
