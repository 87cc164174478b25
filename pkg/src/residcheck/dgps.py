"""Data-generating processes driving the simulation labs.

Two families:

* :class:`GaussianPairDGP` draws the per-observation influence vector
  (d_c, d_g) directly from its joint normal limit, so the estimator
  c_hat = c_true + mean(d_c) and checks gamma_hat = mean(d_g) have their
  exact asymptotic joint law at every n. This is the fast path with known
  population covariance.
* :class:`RctLinearDGP` simulates outcome, treatment, and covariates from a
  (possibly treatment-interacted) linear model and pushes each replication
  through the full adapter in :mod:`residcheck.rct`. This is the slow
  end-to-end path.

Both expose the population covariance blocks, influence evaluators on raw
data points, and a batched replication method returning aligned arrays so
the labs can aggregate without caring which family produced them.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .core import JointCovariance, compute_lambda, informativeness
from .errors import ConfigError
from .rct import RctDataset, residualized_estimator

# Cap on reps * n * dims simulated inside a single chunk; keeps per-chunk
# arrays around 30 MB while leaving the random stream independent of the
# chunking (consecutive standard_normal calls consume the stream in order).
_CHUNK_BUDGET = 4_000_000


@dataclass(frozen=True)
class BatchReplications:
    """Aligned per-replication arrays produced by a DGP batch."""

    c_short: np.ndarray
    c_resid: np.ndarray
    se_short: np.ndarray
    se_resid: np.ndarray
    gamma_hat: np.ndarray
    sigma_gg: np.ndarray
    c_long: np.ndarray | None = None
    se_long: np.ndarray | None = None


@dataclass(frozen=True)
class GaussianPairDGP:
    """Direct simulation of the joint normal limit of (c_hat, gamma_hat).

    ``lambda_long`` optionally defines a fixed-coefficient analogue of the
    conventional adjusted estimator, c_long = c_hat - lambda_long . gamma_hat;
    when absent no long estimator is reported.
    """

    sigma_c_sq: float = 1.0
    sigma_c_gamma: np.ndarray = field(default_factory=lambda: np.array([0.5]))
    sigma_gamma_gamma: np.ndarray = field(default_factory=lambda: np.eye(1))
    c_true: float = 0.0
    lambda_long: np.ndarray | None = None

    def __post_init__(self):
        scg = np.atleast_1d(np.asarray(self.sigma_c_gamma, dtype=float))
        sgg = np.atleast_2d(np.asarray(self.sigma_gamma_gamma, dtype=float))
        object.__setattr__(self, "sigma_c_gamma", scg)
        object.__setattr__(self, "sigma_gamma_gamma", sgg)
        if self.lambda_long is not None:
            object.__setattr__(
                self, "lambda_long", np.atleast_1d(np.asarray(self.lambda_long, dtype=float))
            )
        full = JointCovariance.full_matrix_of(float(self.sigma_c_sq), scg, sgg)
        object.__setattr__(self, "_chol_full", np.linalg.cholesky(full))

    @classmethod
    def from_rho(cls, rho: float, c_true: float = 0.0, lambda_long=None) -> "GaussianPairDGP":
        """Scalar check with unit variances and correlation rho."""
        if not -1.0 < rho < 1.0:
            raise ConfigError(f"rho must lie strictly inside (-1, 1), got {rho}")
        return cls(
            sigma_c_sq=1.0,
            sigma_c_gamma=np.array([float(rho)]),
            sigma_gamma_gamma=np.eye(1),
            c_true=c_true,
            lambda_long=lambda_long,
        )

    @property
    def p_gamma(self) -> int:
        return self.sigma_c_gamma.shape[0]

    def population_covariance(self, n: int) -> JointCovariance:
        return JointCovariance(self.sigma_c_sq, self.sigma_c_gamma, self.sigma_gamma_gamma, n)

    @property
    def lambda_opt(self) -> np.ndarray:
        return compute_lambda(self.population_covariance(2))

    @property
    def informativeness(self) -> float:
        return informativeness(self.population_covariance(2))

    @property
    def sigma_r_sq(self) -> float:
        return self.sigma_c_sq * (1.0 - self.informativeness)

    def draw(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """n draws of the per-observation vector (d_c, d_g) under the base model.

        The Cholesky transform is applied in place, descending over columns
        so each output column only reads not-yet-overwritten inputs; this
        avoids a second large allocation in the labs' hot loops.
        """
        z = rng.standard_normal((n, 1 + self.p_gamma))
        chol = self._chol_full
        for j in range(chol.shape[0] - 1, -1, -1):
            col = z[:, j]
            col *= chol[j, j]
            for i in range(j):
                col += chol[j, i] * z[:, i]
        return z

    # Influence evaluators on raw data points (population scale, mean zero).
    def influence_c(self, data: np.ndarray) -> np.ndarray:
        return data[:, 0]

    def influence_gamma(self, data: np.ndarray) -> np.ndarray:
        return data[:, 1:]

    def influence_adjusted(self, lam) -> Callable[[np.ndarray], np.ndarray]:
        lam = np.atleast_1d(np.asarray(lam, dtype=float))
        return lambda data: data[:, 0] - data[:, 1:] @ lam

    def estimate_short(self, data: np.ndarray) -> float:
        return self.c_true + float(data[:, 0].mean())

    def estimate_fixed(self, data: np.ndarray, lam) -> float:
        lam = np.atleast_1d(np.asarray(lam, dtype=float))
        return self.c_true + float(data[:, 0].mean() - data[:, 1:].mean(axis=0) @ lam)

    def estimate_plugin_residualized(self, data: np.ndarray) -> float:
        centered = data - data.mean(axis=0)
        cov = centered.T @ centered / data.shape[0]
        lam_hat = np.linalg.solve(cov[1:, 1:], cov[0, 1:])
        return self.c_true + float(data[:, 0].mean() - data[:, 1:].mean(axis=0) @ lam_hat)

    def replicate_batch(self, rng: np.random.Generator, n: int, size: int) -> BatchReplications:
        """size independent replications at sample size n, vectorized."""
        p = self.p_gamma
        out = {
            "c_short": np.empty(size),
            "c_resid": np.empty(size),
            "se_short": np.empty(size),
            "se_resid": np.empty(size),
            "gamma_hat": np.empty((size, p)),
            "sigma_gg": np.empty((size, p, p)),
        }
        with_long = self.lambda_long is not None
        if with_long:
            out["c_long"] = np.empty(size)
            out["se_long"] = np.empty(size)
        chunk = max(1, _CHUNK_BUDGET // (n * (1 + p)))
        start = 0
        while start < size:
            b = min(chunk, size - start)
            sl = slice(start, start + b)
            d = rng.standard_normal((b, n, 1 + p)) @ self._chol_full.T
            means = d.mean(axis=1)
            centered = d - means[:, None, :]
            cov = np.einsum("bij,bik->bjk", centered, centered) / n
            gamma = means[:, 1:]
            sigma_cg = cov[:, 0, 1:]
            sigma_gg = cov[:, 1:, 1:]
            lam_hat = np.linalg.solve(sigma_gg, sigma_cg[..., None])[..., 0]
            var_r = cov[:, 0, 0] - np.einsum("bj,bj->b", sigma_cg, lam_hat)
            out["c_short"][sl] = self.c_true + means[:, 0]
            out["c_resid"][sl] = (
                self.c_true + means[:, 0] - np.einsum("bj,bj->b", lam_hat, gamma)
            )
            out["se_short"][sl] = np.sqrt(cov[:, 0, 0] / n)
            out["se_resid"][sl] = np.sqrt(np.clip(var_r, 0.0, None) / n)
            out["gamma_hat"][sl] = gamma
            out["sigma_gg"][sl] = sigma_gg
            if with_long:
                lam_l = self.lambda_long
                var_l = (
                    cov[:, 0, 0]
                    - 2.0 * sigma_cg @ lam_l
                    + np.einsum("j,bjk,k->b", lam_l, sigma_gg, lam_l)
                )
                out["c_long"][sl] = self.c_true + means[:, 0] - gamma @ lam_l
                out["se_long"][sl] = np.sqrt(np.clip(var_l, 0.0, None) / n)
            start += b
        return BatchReplications(**out)


@dataclass(frozen=True)
class RctLinearDGP:
    """Randomized trial with outcome tau T + (beta + interaction T)' X + noise.

    Covariates are independent standard normal, treatment is Bernoulli(pi),
    and the average treatment effect equals tau. ``interaction`` of zeros
    gives the homoskedastic linear case in which the long and residualized
    coefficients share the same probability limit beta; nonzero interaction
    with pi != 1/2 separates them.
    """

    tau: float = 1.0
    beta: np.ndarray = field(default_factory=lambda: np.array([1.0]))
    interaction: np.ndarray = field(default_factory=lambda: np.array([0.0]))
    pi: float = 0.5
    noise_sd: float = 1.0
    alpha: float = 0.0

    def __post_init__(self):
        beta = np.atleast_1d(np.asarray(self.beta, dtype=float))
        inter = np.atleast_1d(np.asarray(self.interaction, dtype=float))
        if beta.shape != inter.shape:
            raise ConfigError("beta and interaction must have the same length")
        if not 0.0 < self.pi < 1.0:
            raise ConfigError(f"treated share pi must lie in (0, 1), got {self.pi}")
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "interaction", inter)

    @property
    def p_gamma(self) -> int:
        return self.beta.shape[0]

    @property
    def c_true(self) -> float:
        return self.tau

    # Population asymptotics of the difference in means and balance vector.
    def sigma_blocks(self) -> tuple[float, np.ndarray, np.ndarray]:
        pi = self.pi
        b1 = self.beta + self.interaction
        b0 = self.beta
        var1 = float(b1 @ b1) + self.noise_sd**2
        var0 = float(b0 @ b0) + self.noise_sd**2
        sigma_c_sq = var1 / pi + var0 / (1.0 - pi)
        sigma_cg = b1 / pi + b0 / (1.0 - pi)
        sigma_gg = (1.0 / pi + 1.0 / (1.0 - pi)) * np.eye(self.p_gamma)
        return sigma_c_sq, sigma_cg, sigma_gg

    def population_covariance(self, n: int) -> JointCovariance:
        scc, scg, sgg = self.sigma_blocks()
        return JointCovariance(scc, scg, sgg, n)

    @property
    def beta_resid_limit(self) -> np.ndarray:
        return self.beta + (1.0 - self.pi) * self.interaction

    @property
    def beta_long_limit(self) -> np.ndarray:
        return self.beta + self.pi * self.interaction

    def draw_matrix(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """n rows of (y, t, x_1..x_p)."""
        t = (rng.random(n) < self.pi).astype(float)
        x = rng.standard_normal((n, self.p_gamma))
        y = (
            self.alpha
            + self.tau * t
            + x @ self.beta
            + (x @ self.interaction) * t
            + self.noise_sd * rng.standard_normal(n)
        )
        return np.column_stack([y, t, x])

    def to_dataset(self, matrix: np.ndarray) -> RctDataset:
        return RctDataset(outcome=matrix[:, 0], treatment=matrix[:, 1], covariates=matrix[:, 2:])

    def draw_dataset(self, rng: np.random.Generator, n: int) -> RctDataset:
        return self.to_dataset(self.draw_matrix(rng, n))

    # Influence evaluators at the population parameters, for the
    # misspecification lab's inner products on raw data rows.
    def influence_c(self, data: np.ndarray) -> np.ndarray:
        y, t = data[:, 0], data[:, 1]
        mu1 = self.alpha + self.tau
        mu0 = self.alpha
        return t * (y - mu1) / self.pi - (1.0 - t) * (y - mu0) / (1.0 - self.pi)

    def influence_gamma(self, data: np.ndarray) -> np.ndarray:
        t = data[:, 1]
        x = data[:, 2:]
        w = (t / self.pi - (1.0 - t) / (1.0 - self.pi))[:, None]
        return w * x

    def influence_adjusted(self, lam) -> Callable[[np.ndarray], np.ndarray]:
        lam = np.atleast_1d(np.asarray(lam, dtype=float))
        return lambda data: self.influence_c(data) - self.influence_gamma(data) @ lam

    def structural_mean_shift_score(self) -> Callable[[np.ndarray], np.ndarray]:
        """Score of an equal outcome-mean shift in both arms (within-model)."""

        def score(data: np.ndarray) -> np.ndarray:
            y, t = data[:, 0], data[:, 1]
            x = data[:, 2:]
            resid = y - self.alpha - self.tau * t - x @ self.beta - (x @ self.interaction) * t
            return resid / self.noise_sd**2

        return score

    def estimate_plugin_residualized(self, data: np.ndarray) -> float:
        return residualized_estimator(self.to_dataset(data)).c_resid

    def replicate_batch(self, rng: np.random.Generator, n: int, size: int) -> BatchReplications:
        """size end-to-end replications through the adapter (loop per rep)."""
        p = self.p_gamma
        c_short = np.empty(size)
        c_long = np.empty(size)
        c_resid = np.empty(size)
        se_short = np.empty(size)
        se_long = np.empty(size)
        se_resid = np.empty(size)
        gamma_hat = np.empty((size, p))
        sigma_gg = np.empty((size, p, p))
        for i in range(size):
            triple = residualized_estimator(self.draw_dataset(rng, n))
            c_short[i] = triple.c_short
            c_long[i] = triple.c_long
            c_resid[i] = triple.c_resid
            se_short[i] = triple.se_short
            se_long[i] = triple.se_long
            se_resid[i] = triple.se_resid
            gamma_hat[i] = triple.gamma_hat
            sigma_gg[i] = triple.sigma.sigma_gamma_gamma
        return BatchReplications(
            c_short=c_short,
            c_resid=c_resid,
            se_short=se_short,
            se_resid=se_resid,
            gamma_hat=gamma_hat,
            sigma_gg=sigma_gg,
            c_long=c_long,
            se_long=se_long,
        )
