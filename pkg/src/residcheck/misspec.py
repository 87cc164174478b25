"""Monte Carlo lab for local misspecification and minimax bias.

The base model is perturbed along a mean-zero score s with L2 norm at most
mu, giving the local alternative density (1 + s(d)/sqrt(n)) dP0(d). Under
that sequence the sqrt(n)-scale bias of a linear adjustment with influence
function psi_lambda is the inner product E0[psi_lambda s], maximized over
the score ball by s* = mu psi_lambda / ||psi_lambda||, so the worst-case
bias equals mu ||psi_lambda|| and is minimized at the residualizing
coefficient.

Sampling from the perturbed law uses sampling-importance-resampling with the
linear weights 1 + s/sqrt(n): a pool of ``oversample * n`` base draws is
resampled with replacement proportionally to the weights. The linear weights
are the object of interest here, so instead of switching to an exponential
tilt we require the weights to stay positive, checked on a large pilot
sample before any data are produced (WeightUnderflow otherwise); weights
that still come out negative in the far tail are clipped to zero, an event
of vanishing probability once the pilot bound holds.

Norms and inner products ("predicted" biases) are always estimated on a
calibration sample drawn independently of the evaluation replications.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from ._threads import batch_sizes, map_batches
from .errors import ConfigError, NegativeMu, WeightUnderflow, ZeroInfluence

Sampler = Callable[[np.random.Generator, int], np.ndarray]
ScoreFn = Callable[[np.ndarray], np.ndarray]

DEFAULT_CALIBRATION_DRAWS = 1_000_000
DEFAULT_PILOT_DRAWS = 1_000_000
DEFAULT_OVERSAMPLE = 20
# Budget guard on reps * n for a bias measurement run.
MAX_TOTAL_DRAWS = 500_000_000

_N_BATCHES = 50


@dataclass(frozen=True)
class MisspecScore:
    """Per-observation perturbation direction with L2 bound mu."""

    fn: ScoreFn
    mu: float
    description: str = ""

    def __call__(self, data: np.ndarray) -> np.ndarray:
        return np.asarray(self.fn(data), dtype=float)


@dataclass(frozen=True)
class LinearAdjustedEstimator:
    """An estimator together with its population influence evaluator."""

    name: str
    c_true: float
    estimate: Callable[[np.ndarray], float]
    influence: Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class BiasMeasurement:
    sqrt_n_bias: float
    mc_se: float
    predicted: float
    predicted_se: float
    n: int
    reps: int
    mu: float


@dataclass(frozen=True)
class DecompositionCheck:
    """MC inner products for the structural/misspecification bias split."""

    total_bias: float
    total_bias_se: float
    target_shift: float
    target_shift_se: float
    net_bias: float
    net_bias_se: float
    misspec_term: float
    misspec_term_se: float
    gamma_structural_term: float
    gamma_structural_term_se: float


def zero_score() -> MisspecScore:
    return MisspecScore(fn=lambda data: np.zeros(data.shape[0]), mu=0.0, description="zero")


def worst_case_score(
    psi_lambda: ScoreFn,
    mu: float,
    p0_sampler: Sampler,
    calibration_draws: int = 100_000,
    seed: int = 0,
) -> MisspecScore:
    """Bias-maximizing direction mu * psi_lambda / ||psi_lambda||.

    The norm is estimated on ``calibration_draws`` base-model draws (at
    least 1e5 recommended); a numerically zero norm raises ZeroInfluence.
    """
    if mu < 0:
        raise NegativeMu(f"misspecification bound must be nonnegative, got {mu}")
    if calibration_draws < 2:
        raise ConfigError("calibration_draws must be at least 2")
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(901,)))
    calib = p0_sampler(rng, calibration_draws)
    values = np.asarray(psi_lambda(calib), dtype=float)
    norm = math.sqrt(float(np.mean(values**2)))
    if norm < 1e-12:
        raise ZeroInfluence("influence evaluator is numerically zero on the calibration sample")
    scale = mu / norm
    return MisspecScore(
        fn=lambda data: scale * np.asarray(psi_lambda(data), dtype=float),
        mu=float(mu),
        description=f"worst_case(norm={norm:.6g})",
    )


def validate_score(
    score: MisspecScore, p0_sampler: Sampler, draws: int = 100_000, seed: int = 1
) -> None:
    """Check mean zero and E0[s^2] <= mu^2 (1 + 1e-6), both up to 3 MC SEs."""
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(902,)))
    values = score(p0_sampler(rng, draws))
    mean = float(values.mean())
    se = float(values.std(ddof=1) / math.sqrt(draws))
    if abs(mean) > max(3.0 * se, 1e-12):
        raise ConfigError(f"score mean {mean:.4g} is not within 3 MC SEs ({se:.4g}) of zero")
    squares = values**2
    second = float(squares.mean())
    second_se = float(squares.std(ddof=1) / math.sqrt(draws))
    if second > score.mu**2 * (1.0 + 1e-6) + 3.0 * second_se + 1e-12:
        raise ConfigError(
            f"score second moment {second:.6g} exceeds mu^2 = {score.mu**2:.6g} "
            f"beyond MC error ({second_se:.2g})"
        )


def check_weight_bound(
    score: MisspecScore,
    p0_sampler: Sampler,
    n: int,
    seed: int = 2,
    pilot_draws: int = DEFAULT_PILOT_DRAWS,
) -> float:
    """Pilot bound sup |s| / sqrt(n) < 1; returns the pilot maximum of |s|."""
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(903,)))
    sup = 0.0
    remaining = pilot_draws
    while remaining > 0:
        m = min(remaining, 500_000)
        sup = max(sup, float(np.abs(score(p0_sampler(rng, m))).max()))
        remaining -= m
    if sup / math.sqrt(n) >= 1.0:
        raise WeightUnderflow(
            f"pilot sup |s| = {sup:.4g} reaches sqrt(n) = {math.sqrt(n):.4g}; "
            "n is too small for this mu and score shape"
        )
    return sup


def _resample(
    pool: np.ndarray, weights: np.ndarray, n: int, uniforms: np.ndarray
) -> np.ndarray:
    cdf = np.cumsum(weights)
    idx = np.searchsorted(cdf, uniforms * cdf[-1], side="right")
    return pool[np.minimum(idx, pool.shape[0] - 1)]


def _draw_perturbed(
    rng: np.random.Generator,
    p0_sampler: Sampler,
    score: MisspecScore,
    n: int,
    oversample: int,
) -> np.ndarray:
    pool = p0_sampler(rng, oversample * n)
    weights = np.clip(1.0 + score(pool) / math.sqrt(n), 0.0, None)
    return _resample(pool, weights, n, rng.random(n))


def sample_perturbed(
    p0_sampler: Sampler,
    score: MisspecScore,
    n: int,
    seed: int,
    oversample: int = DEFAULT_OVERSAMPLE,
    skip_pilot: bool = False,
) -> np.ndarray:
    """Draw n observations from the locally perturbed law (1 + s/sqrt(n)) dP0."""
    if not skip_pilot:
        check_weight_bound(score, p0_sampler, n, seed=seed)
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(904,)))
    return _draw_perturbed(rng, p0_sampler, score, n, oversample)


def measure_bias(
    estimator: LinearAdjustedEstimator,
    p0_sampler: Sampler,
    score: MisspecScore,
    n: int,
    reps: int,
    seed: int,
    oversample: int = DEFAULT_OVERSAMPLE,
    calibration_draws: int = DEFAULT_CALIBRATION_DRAWS,
    threads: int | None = None,
    max_total_draws: int = MAX_TOTAL_DRAWS,
) -> BiasMeasurement:
    """Measured sqrt(n)-scale bias under the perturbed law vs its prediction.

    sqrt_n_bias averages sqrt(n) (estimate - c_true) over independent
    replications drawn through the resampler; predicted is the calibration
    estimate of E0[psi s]. Both carry MC standard errors.
    """
    if reps * n > max_total_draws:
        raise ConfigError(
            f"reps * n = {reps * n:.3g} exceeds the configured budget {max_total_draws:.3g}"
        )
    check_weight_bound(score, p0_sampler, n, seed=seed)

    ss = np.random.SeedSequence(seed)
    sizes = batch_sizes(reps, _N_BATCHES)
    children = ss.spawn(len(sizes) + 1)

    calib_rng = np.random.default_rng(children[-1])
    calib = p0_sampler(calib_rng, calibration_draws)
    products = np.asarray(estimator.influence(calib), dtype=float) * score(calib)
    predicted = float(products.mean())
    predicted_se = float(products.std(ddof=1) / math.sqrt(calibration_draws))

    root_n = math.sqrt(n)

    def run_batch(b: int) -> np.ndarray:
        rng = np.random.default_rng(children[b])
        vals = np.empty(sizes[b])
        for i in range(sizes[b]):
            data = _draw_perturbed(rng, p0_sampler, score, n, oversample)
            vals[i] = root_n * (estimator.estimate(data) - estimator.c_true)
        return vals

    scaled = np.concatenate(map_batches(run_batch, len(sizes), threads))
    return BiasMeasurement(
        sqrt_n_bias=float(scaled.mean()),
        mc_se=float(scaled.std(ddof=1) / math.sqrt(reps)),
        predicted=predicted,
        predicted_se=predicted_se,
        n=n,
        reps=reps,
        mu=score.mu,
    )


@dataclass(frozen=True)
class BiasProfile:
    """Worst-case bias and MSE of c_hat(lambda) under each lambda's own s*."""

    lambdas: np.ndarray
    mus: np.ndarray
    bias: np.ndarray
    bias_se: np.ndarray
    mse: np.ndarray
    mse_se: np.ndarray
    predicted_bias: np.ndarray

    def argmin_bias(self, mu_index: int) -> int:
        return int(np.argmin(self.bias[mu_index]))

    def argmin_mse(self, mu_index: int) -> int:
        return int(np.argmin(self.mse[mu_index]))


def worst_case_bias_profile(
    dgp,
    lambdas,
    mus,
    n: int,
    reps: int,
    seed: int,
    oversample: int = DEFAULT_OVERSAMPLE,
    calibration_draws: int = DEFAULT_CALIBRATION_DRAWS,
    threads: int | None = None,
) -> BiasProfile:
    """Measure bias of the fixed-lambda adjustment under its own worst case.

    All (mu, lambda) combinations share the base-model pool and resampling
    uniforms within a replication (common random numbers), which is what
    makes the argmin over the lambda grid detectable at moderate rep counts.
    Scalar-check DGPs only.
    """
    if dgp.p_gamma != 1:
        raise ConfigError("the profile runner supports scalar checks only")
    lambdas = np.asarray(lambdas, dtype=float).reshape(-1)
    mus = np.asarray(mus, dtype=float).reshape(-1)
    if np.any(mus < 0):
        raise NegativeMu("all mu values must be nonnegative")

    ss = np.random.SeedSequence(seed)
    sizes = batch_sizes(reps, _N_BATCHES)
    children = ss.spawn(len(sizes) + 2)

    calib = dgp.draw(np.random.default_rng(children[-1]), calibration_draws)
    psis = [np.asarray(dgp.influence_adjusted(lam)(calib), dtype=float) for lam in lambdas]
    norms = np.array([math.sqrt(float(np.mean(v**2))) for v in psis])
    if norms.min() < 1e-12:
        raise ZeroInfluence("an adjusted influence function is numerically zero")

    # Pilot weight bound across all combinations on a shared pilot sample.
    pilot = dgp.draw(np.random.default_rng(children[-2]), DEFAULT_PILOT_DRAWS)
    root_n = math.sqrt(n)
    for j, lam in enumerate(lambdas):
        sup = float(np.abs(dgp.influence_adjusted(lam)(pilot)).max()) / norms[j]
        if mus.max() * sup / root_n >= 1.0:
            raise WeightUnderflow(
                f"lambda = {lam:.4g}, mu = {mus.max():.4g}: pilot weights reach zero at n = {n}"
            )

    n_mu, n_lam = mus.shape[0], lambdas.shape[0]

    def run_batch(b: int) -> tuple[np.ndarray, np.ndarray]:
        rng = np.random.default_rng(children[b])
        sums = np.zeros((2, n_mu, n_lam, sizes[b]))
        m = oversample * n
        for i in range(sizes[b]):
            pool = dgp.draw(rng, m)
            uniforms = rng.random(n)
            psi_pool = [dgp.influence_adjusted(lam)(pool) for lam in lambdas]
            for a, mu in enumerate(mus):
                for j, lam in enumerate(lambdas):
                    s_vals = mu / norms[j] * psi_pool[j]
                    weights = np.clip(1.0 + s_vals / root_n, 0.0, None)
                    data = _resample(pool, weights, n, uniforms)
                    est = dgp.estimate_fixed(data, lam)
                    scaled = root_n * (est - dgp.c_true)
                    sums[0, a, j, i] = scaled
                    sums[1, a, j, i] = scaled**2
            del pool, psi_pool
        return sums[0], sums[1]

    parts = map_batches(run_batch, len(sizes), threads)
    scaled = np.concatenate([p[0] for p in parts], axis=-1)
    squared = np.concatenate([p[1] for p in parts], axis=-1)
    return BiasProfile(
        lambdas=lambdas,
        mus=mus,
        bias=scaled.mean(axis=-1),
        bias_se=scaled.std(axis=-1, ddof=1) / math.sqrt(reps),
        mse=squared.mean(axis=-1),
        mse_se=squared.std(axis=-1, ddof=1) / math.sqrt(reps),
        predicted_bias=mus[:, None] * norms[None, :],
    )


def bias_decomposition_check(
    structural_score: ScoreFn,
    misspec_score: MisspecScore,
    lam,
    influence_c: ScoreFn,
    influence_gamma: Callable[[np.ndarray], np.ndarray],
    p0_sampler: Sampler,
    calibration_draws: int = DEFAULT_CALIBRATION_DRAWS,
    seed: int = 3,
) -> DecompositionCheck:
    """Split total first-order bias into target shift and net estimator bias.

    With psi = phi_c - lam phi_gamma, the total asymptotic mean under the
    combined score s_h + s_z is E0[psi (s_h + s_z)], the target itself moves
    by E0[phi_c s_h], and the net bias of the adjusted estimator is

        E0[psi s_z] - lam E0[phi_gamma s_h]

    which collapses to E0[psi s_z] when the structural direction leaves the
    checks flat. All terms are MC inner products on one calibration sample.
    """
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(905,)))
    calib = p0_sampler(rng, calibration_draws)

    phi_c = np.asarray(influence_c(calib), dtype=float)
    phi_g = np.atleast_2d(np.asarray(influence_gamma(calib), dtype=float))
    if phi_g.shape[0] != phi_c.shape[0]:
        phi_g = phi_g.T
    psi = phi_c - phi_g @ lam
    s_h = np.asarray(structural_score(calib), dtype=float)
    s_z = misspec_score(calib)

    def stat(values: np.ndarray) -> tuple[float, float]:
        return float(values.mean()), float(values.std(ddof=1) / math.sqrt(values.shape[0]))

    total, total_se = stat(psi * (s_h + s_z))
    shift, shift_se = stat(phi_c * s_h)
    net, net_se = stat(psi * (s_h + s_z) - phi_c * s_h)
    mis, mis_se = stat(psi * s_z)
    gam, gam_se = stat((phi_g @ lam) * s_h)
    return DecompositionCheck(
        total_bias=total,
        total_bias_se=total_se,
        target_shift=shift,
        target_shift_se=shift_se,
        net_bias=net,
        net_bias_se=net_se,
        misspec_term=mis,
        misspec_term_se=mis_se,
        gamma_structural_term=gam,
        gamma_structural_term_se=gam_se,
    )


def short_estimator_of(dgp) -> LinearAdjustedEstimator:
    """Unadjusted estimator of the Gaussian pair DGP with influence d_c."""
    return LinearAdjustedEstimator(
        name="short",
        c_true=dgp.c_true,
        estimate=dgp.estimate_short,
        influence=dgp.influence_c,
    )


def fixed_lambda_estimator_of(dgp, lam) -> LinearAdjustedEstimator:
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    return LinearAdjustedEstimator(
        name=f"fixed({np.array2string(lam, precision=4)})",
        c_true=dgp.c_true,
        estimate=lambda data: dgp.estimate_fixed(data, lam),
        influence=dgp.influence_adjusted(lam),
    )


def plugin_residualized_of(dgp) -> LinearAdjustedEstimator:
    """Plug-in residualized estimator; influence taken at the population row."""
    return LinearAdjustedEstimator(
        name="residualized",
        c_true=dgp.c_true,
        estimate=dgp.estimate_plugin_residualized,
        influence=dgp.influence_adjusted(dgp.lambda_opt),
    )
