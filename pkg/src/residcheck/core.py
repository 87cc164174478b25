"""Covariance algebra for residualizing an estimator on its diagnostic checks.

Everything in this module is computable from the joint asymptotic covariance

    Sigma = [[sigma_c^2,     Sigma_cg],
             [Sigma_cg',     Sigma_gg]]

of a scalar baseline estimate c_hat and a p-vector of checks gamma_hat,
stored at per-observation scale together with the sample size n (so the
estimator-scale covariance is Sigma / n).

Core quantities:

    Lambda      = Sigma_cg Sigma_gg^{-1}          sensitivity coefficient row
    c_r         = c_hat - Lambda gamma_hat        residualized estimate
    sigma_r^2   = sigma_c^2 - Sigma_cg Sigma_gg^{-1} Sigma_gc
    I           = Sigma_cg Sigma_gg^{-1} Sigma_gc / sigma_c^2   in [0, 1)

plus the worst-case bias map mu * ||psi_lambda|| over a bounded score ball,
whose minimum over linear adjustments is mu * sigma_c * sqrt(1 - I), attained
at lambda = Lambda, with minimax mean squared error (1 + mu^2) sigma_r^2.

All functions are pure; inputs are never mutated.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg as sla
from scipy.stats import chi2

from .errors import (
    DegenerateResidualVariance,
    DimensionMismatch,
    InvalidCovariance,
    NegativeMu,
    SingularCheckCovariance,
)

# Validation tolerances. rcond below RCOND_MIN is treated as singular rather
# than silently regularized: a ridge would change the estimand of the
# adjustment, not just its numerics.
SYMMETRY_RTOL = 1e-10
RCOND_MIN = 1e-12
INFORMATIVENESS_CAP = 1.0 - 1e-15


def _as_row(x, name: str) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(x, dtype=float))
    if arr.ndim != 1:
        arr = arr.reshape(-1)
    if not np.all(np.isfinite(arr)):
        raise InvalidCovariance(f"{name} contains non-finite entries")
    return arr


@dataclass(frozen=True)
class JointCovariance:
    """Joint per-observation covariance of (c_hat, gamma_hat) plus sample size.

    Validation enforces: symmetric strictly positive definite check block,
    strictly positive residual variance (Schur complement), and positive
    semidefiniteness of the assembled (1+p) x (1+p) matrix.
    """

    sigma_c_sq: float
    sigma_c_gamma: np.ndarray
    sigma_gamma_gamma: np.ndarray
    n: int
    _chol_gg: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        scg = _as_row(self.sigma_c_gamma, "sigma_c_gamma")
        sgg = np.asarray(self.sigma_gamma_gamma, dtype=float)
        if sgg.ndim != 2 or sgg.shape[0] != sgg.shape[1]:
            raise InvalidCovariance("sigma_gamma_gamma must be a square matrix")
        if sgg.shape[0] != scg.shape[0]:
            raise DimensionMismatch(
                f"sigma_c_gamma has length {scg.shape[0]} but "
                f"sigma_gamma_gamma is {sgg.shape[0]}x{sgg.shape[1]}"
            )
        if not np.all(np.isfinite(sgg)):
            raise InvalidCovariance("sigma_gamma_gamma contains non-finite entries")
        scc = float(self.sigma_c_sq)
        if not np.isfinite(scc) or scc <= 0.0:
            raise InvalidCovariance(f"sigma_c_sq must be finite and positive, got {scc}")
        if int(self.n) < 1:
            raise InvalidCovariance(f"sample size must be positive, got {self.n}")

        scale = np.abs(sgg).max()
        if np.abs(sgg - sgg.T).max() > SYMMETRY_RTOL * max(scale, 1e-300):
            raise InvalidCovariance("sigma_gamma_gamma is not symmetric")
        sgg = 0.5 * (sgg + sgg.T)

        # Strict positive definiteness of the check block: Cholesky must
        # succeed and the eigenvalue-based reciprocal condition number must
        # clear RCOND_MIN (collinear checks are a hard error).
        try:
            chol = np.linalg.cholesky(sgg)
        except np.linalg.LinAlgError:
            raise SingularCheckCovariance(
                "check covariance is not positive definite (Cholesky failed)"
            ) from None
        eigs = np.linalg.eigvalsh(sgg)
        if eigs[0] <= 0.0 or eigs[0] / eigs[-1] < RCOND_MIN:
            raise SingularCheckCovariance(
                f"check covariance reciprocal condition {eigs[0] / eigs[-1]:.3e} "
                f"below {RCOND_MIN:g}; diagnostic checks are collinear"
            )

        explained = float(scg @ sla.cho_solve((chol, True), scg))
        if not scc > explained:
            raise DegenerateResidualVariance(
                f"sigma_c_sq = {scc:.6g} does not strictly exceed the part "
                f"explained by the checks ({explained:.6g}); residual variance "
                "would not be positive"
            )

        full = self.full_matrix_of(scc, scg, sgg)
        if np.linalg.eigvalsh(full)[0] < -1e-10 * np.abs(full).max():
            raise InvalidCovariance("assembled joint covariance is not positive semidefinite")

        object.__setattr__(self, "sigma_c_gamma", scg)
        object.__setattr__(self, "sigma_gamma_gamma", sgg)
        object.__setattr__(self, "sigma_c_sq", scc)
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "_chol_gg", chol)

    @staticmethod
    def full_matrix_of(scc: float, scg: np.ndarray, sgg: np.ndarray) -> np.ndarray:
        p = scg.shape[0]
        full = np.empty((1 + p, 1 + p))
        full[0, 0] = scc
        full[0, 1:] = scg
        full[1:, 0] = scg
        full[1:, 1:] = sgg
        return full

    @property
    def p_gamma(self) -> int:
        return self.sigma_c_gamma.shape[0]

    def full_matrix(self) -> np.ndarray:
        return self.full_matrix_of(self.sigma_c_sq, self.sigma_c_gamma, self.sigma_gamma_gamma)

    def solve_gg(self, rhs: np.ndarray) -> np.ndarray:
        """Solve Sigma_gg x = rhs through the cached Cholesky factor."""
        return sla.cho_solve((self._chol_gg, True), rhs)


@dataclass(frozen=True)
class ResidualizationResult:
    """Point estimates and (optionally) the variance-side summary.

    ``c_r = c_hat - correction`` holds exactly and ``decomposition`` sums to
    ``correction``; the standard-error fields are populated only when the
    result was built from a full joint covariance.
    """

    lam: np.ndarray
    c_hat: float
    gamma_hat: np.ndarray
    c_r: float
    correction: float
    decomposition: np.ndarray
    se_c: float | None = None
    se_r: float | None = None
    informativeness: float | None = None


@dataclass(frozen=True)
class CovarianceDiagnostics:
    sigma_r_sq: float
    informativeness: float
    bias_reduction_factor: float
    variance_reduction_pct: float
    equiv_sample_increase: float


@dataclass(frozen=True)
class MisspecBounds:
    """Worst-case bias over the score ball of radius mu, per adjustment row.

    ``lambdas`` always contains the optimal row Lambda (appended last when
    not supplied); ``worst_case_bias`` is aligned with it.
    """

    mu: float
    lambdas: tuple[np.ndarray, ...]
    worst_case_bias: np.ndarray
    minimax_bias: float
    minimax_mse: float
    argmin_lambda: np.ndarray


@dataclass(frozen=True)
class OrthogonalityCheck:
    wald_stat: float
    dof: int
    p_value: float
    sigma_c_gamma_norm: float
    informativeness: float
    flagged: bool
    note: str


def compute_lambda(sigma: JointCovariance) -> np.ndarray:
    """Sensitivity row Lambda solving Sigma_gg Lambda' = Sigma_gc.

    Uses the cached Cholesky factor of the check block; no explicit inverse
    is formed.
    """
    return sigma.solve_gg(sigma.sigma_c_gamma)


def explained_variance(sigma: JointCovariance) -> float:
    """Quadratic form Sigma_cg Sigma_gg^{-1} Sigma_gc."""
    return float(sigma.sigma_c_gamma @ compute_lambda(sigma))


def informativeness(sigma: JointCovariance) -> float:
    """Share of the baseline sampling variance predictable from the checks.

    Clipped to [0, 1 - 1e-15] so that sqrt(1 - I) stays well defined
    downstream.
    """
    raw = explained_variance(sigma) / sigma.sigma_c_sq
    return float(min(max(raw, 0.0), INFORMATIVENESS_CAP))


def residualize(c_hat: float, gamma_hat, lam) -> ResidualizationResult:
    """Subtract the linear adjustment lam . gamma_hat from c_hat.

    Returns the point-estimate fields only; combine with a covariance via
    :func:`full_residualization` for standard errors.
    """
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    gamma_hat = np.atleast_1d(np.asarray(gamma_hat, dtype=float))
    if lam.shape != gamma_hat.shape:
        raise DimensionMismatch(
            f"coefficient row has shape {lam.shape} but checks have shape {gamma_hat.shape}"
        )
    decomposition = lam * gamma_hat
    correction = float(decomposition.sum())
    return ResidualizationResult(
        lam=lam,
        c_hat=float(c_hat),
        gamma_hat=gamma_hat,
        c_r=float(c_hat) - correction,
        correction=correction,
        decomposition=decomposition,
    )


def diagnostics(sigma: JointCovariance) -> CovarianceDiagnostics:
    """Variance-side summary of what residualization buys.

    sigma_r_sq = sigma_c^2 (1 - I), bias_reduction_factor = sqrt(1 - I),
    variance_reduction_pct = 100 I, and the equivalent relative increase in
    sample size 1 / (1 - I) - 1.
    """
    info = informativeness(sigma)
    return CovarianceDiagnostics(
        sigma_r_sq=sigma.sigma_c_sq * (1.0 - info),
        informativeness=info,
        bias_reduction_factor=float(np.sqrt(1.0 - info)),
        variance_reduction_pct=100.0 * info,
        equiv_sample_increase=1.0 / (1.0 - info) - 1.0,
    )


def adjusted_variance(sigma: JointCovariance, lam) -> float:
    """Asymptotic variance of the adjustment c_hat - lam . gamma_hat.

    Equals sigma_c^2 - 2 lam Sigma_gc + lam Sigma_gg lam', the squared L2
    length of the adjusted influence function psi_lambda.
    """
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    if lam.shape[0] != sigma.p_gamma:
        raise DimensionMismatch(
            f"coefficient row has length {lam.shape[0]}, expected {sigma.p_gamma}"
        )
    return float(
        sigma.sigma_c_sq
        - 2.0 * lam @ sigma.sigma_c_gamma
        + lam @ sigma.sigma_gamma_gamma @ lam
    )


def worst_case_bias(sigma: JointCovariance, lam, mu: float) -> float:
    """Worst-case first-order bias mu * ||psi_lambda|| of the adjustment."""
    if mu < 0:
        raise NegativeMu(f"misspecification bound must be nonnegative, got {mu}")
    return float(mu) * float(np.sqrt(max(adjusted_variance(sigma, lam), 0.0)))


def misspec_bounds(sigma: JointCovariance, mu: float, lambdas=None) -> MisspecBounds:
    """Evaluate the worst-case bias map and its minimax value.

    The optimal row Lambda is always appended to the evaluation set, so the
    argmin over the returned grid is Lambda by construction of the bound
    mu ||psi_lambda||, minimized at the variance-minimizing adjustment.
    """
    if mu < 0:
        raise NegativeMu(f"misspecification bound must be nonnegative, got {mu}")
    lam_opt = compute_lambda(sigma)
    rows = [np.atleast_1d(np.asarray(l, dtype=float)) for l in (lambdas or [])]
    rows.append(lam_opt)
    biases = np.array([worst_case_bias(sigma, l, mu) for l in rows])
    info = informativeness(sigma)
    sigma_r_sq = sigma.sigma_c_sq * (1.0 - info)
    return MisspecBounds(
        mu=float(mu),
        lambdas=tuple(rows),
        worst_case_bias=biases,
        minimax_bias=float(mu) * float(np.sqrt(sigma.sigma_c_sq)) * float(np.sqrt(1.0 - info)),
        minimax_mse=(1.0 + mu * mu) * sigma_r_sq,
        argmin_lambda=rows[int(np.argmin(biases))],
    )


def orthogonality_stat(
    sigma_hat: JointCovariance,
    c_hat: float,
    gamma_hat,
    flag_threshold: float = 0.01,
) -> OrthogonalityCheck:
    """Hausman-style orthogonality diagnostic: is Sigma_cg close to zero?

    Reports the Wald statistic n * gamma_hat' Sigma_gg^{-1} gamma_hat for the
    check itself (chi-squared with p degrees of freedom under the base
    model), the norm of the estimated cross block, and a flag when the
    informativeness exceeds ``flag_threshold``.
    """
    gamma_hat = np.atleast_1d(np.asarray(gamma_hat, dtype=float))
    if gamma_hat.shape[0] != sigma_hat.p_gamma:
        raise DimensionMismatch(
            f"gamma_hat has length {gamma_hat.shape[0]}, expected {sigma_hat.p_gamma}"
        )
    wald = float(sigma_hat.n * gamma_hat @ sigma_hat.solve_gg(gamma_hat))
    dof = sigma_hat.p_gamma
    info = informativeness(sigma_hat)
    flagged = info > flag_threshold
    if flagged:
        note = (
            f"baseline estimator leaves precision on the table: informativeness "
            f"{info:.4f} exceeds {flag_threshold:g} (baseline estimate {c_hat:.6g})"
        )
    else:
        note = "baseline estimator is first-order orthogonal to the checks at this threshold"
    return OrthogonalityCheck(
        wald_stat=wald,
        dof=dof,
        p_value=float(chi2.sf(wald, dof)),
        sigma_c_gamma_norm=float(np.linalg.norm(sigma_hat.sigma_c_gamma)),
        informativeness=info,
        flagged=flagged,
        note=note,
    )


def full_residualization(
    sigma: JointCovariance, c_hat: float, gamma_hat
) -> ResidualizationResult:
    """Residualize and attach standard errors implied by the covariance."""
    lam = compute_lambda(sigma)
    point = residualize(c_hat, gamma_hat, lam)
    diag = diagnostics(sigma)
    se_c = float(np.sqrt(sigma.sigma_c_sq / sigma.n))
    return ResidualizationResult(
        lam=point.lam,
        c_hat=point.c_hat,
        gamma_hat=point.gamma_hat,
        c_r=point.c_r,
        correction=point.correction,
        decomposition=point.decomposition,
        se_c=se_c,
        se_r=se_c * diag.bias_reduction_factor,
        informativeness=diag.informativeness,
    )
