"""
Independent verification engines.

* The privacy oracle tracks the exact Gaussian law of unprojected, full-batch DP-SGLD on the quadratic loss for two
  neighbouring datasets and compares the closed-form Rényi divergence against #rdp_general().
* The utility oracles run DP-SGLD over many seeds and compare the Monte-Carlo excess risk against the three-term
  risk bounds, once with a Monte-Carlo estimate of E‖θ₀ − θ*‖² and once with the 4L²/λ² envelope.

All assertions are one-sided: the bounds are upper bounds and only their violation is an error.
"""

import logging
import math
import typing as t
from dataclasses import dataclass, field

import numpy as np

from ._accountant import PrivacyParams, rdp_general
from ._errors import ConfigurationError, ConvergenceError, InvalidInputError, VerificationError
from ._losses import LossModel, QuadraticModel, quadratic_constants
from ._sgld import TrainConfig, dp_sgld_train
from ._types import Constant, Dataset, Decreasing, L2Ball, RunSeed, check_schedule, project
from ._util import map_seeds, mean_stderr

logger = logging.getLogger(__name__)

#: The Monte-Carlo oracles refuse to estimate a standard error from fewer seeds.
MIN_SEEDS = 30

#: Probability budget for the projection firing anywhere in an oracle run.
PROJECTION_FAILURE_PROB = 1e-8

OPTIMUM_TOL = 1e-10
OPTIMUM_MAX_ITERATIONS = 10**6


@dataclass(frozen=True)
class GaussianState:
    """The law N(mean, var·I) of θ_k in the linear-Gaussian process."""

    mean: np.ndarray
    var: float


def gaussian_moments(
    data_mean: np.ndarray,
    eta: float,
    sigma2: float,
    K: int,
    init_mean: t.Optional[np.ndarray] = None,
    init_var: t.Optional[float] = None,
) -> t.List[GaussianState]:
    """
    Exact moments of θ_{k+1} = (1 − η)θ_k + η·mean + √(2ησ²)z for k = 0..K, the full-batch unprojected DP-SGLD
    process on ½‖θ − x‖². The start defaults to μ₀ = 0 and s²₀ = 2σ²/λ = 2σ².
    """

    if not 0 < eta < 1:
        raise InvalidInputError(f"the moment recursion needs 0 < eta < 1, got {eta}")
    if not sigma2 >= 0:
        raise InvalidInputError(f"noise variance must be >= 0, got {sigma2}")
    target = np.atleast_1d(np.asarray(data_mean, dtype=np.float64))
    mean = np.zeros_like(target) if init_mean is None else np.asarray(init_mean, dtype=np.float64)
    var = 2 * sigma2 if init_var is None else float(init_var)
    states = [GaussianState(mean, var)]
    for _ in range(K):
        mean = (1 - eta) * mean + eta * target
        var = (1 - eta) ** 2 * var + 2 * eta * sigma2
        states.append(GaussianState(mean, var))
    return states


def stationary_variance(eta: float, sigma2: float) -> float:
    return 2 * eta * sigma2 / (1 - (1 - eta) ** 2)


def renyi_gaussian_isotropic(alpha: float, mu_a: np.ndarray, mu_b: np.ndarray, s2: float) -> float:
    """D_α(N(μ_a, s²I) ‖ N(μ_b, s²I)) = α‖μ_a − μ_b‖²/(2s²)."""

    if not (s2 > 0 and alpha > 1):
        raise InvalidInputError(f"need s2 > 0 and alpha > 1, got {s2}, {alpha}")
    diff = np.asarray(mu_a, dtype=np.float64) - np.asarray(mu_b, dtype=np.float64)
    return float(alpha * np.dot(diff, diff) / (2 * s2))


@dataclass
class PrivacyOracleReport:
    n: int
    eta: float
    sigma2: float
    iterations: int
    alphas: t.Tuple[float, ...]

    #: Radius of the ball the check assumed, and the L = R + B it implies.
    radius: float
    L: float

    #: Largest observed oracle/bound ratio. Recorded, never asserted beyond ≤ 1.
    max_ratio: float = 0.0

    #: `(k, α)` of #max_ratio.
    worst: t.Tuple[int, float] = (0, 0.0)

    checks: int = 0
    passed: bool = True

    def to_json(self) -> t.Dict[str, t.Any]:
        return {
            "n": self.n,
            "eta": self.eta,
            "sigma2": self.sigma2,
            "iterations": self.iterations,
            "alphas": list(self.alphas),
            "radius": self.radius,
            "L": self.L,
            "max_ratio": self.max_ratio,
            "worst_k": self.worst[0],
            "worst_alpha": self.worst[1],
            "checks": self.checks,
            "passed": self.passed,
        }


def required_radius(mean_norm: float, max_var: float, K: int) -> float:
    """Radius outside of which an iterate lands with probability below #PROJECTION_FAILURE_PROB over the run."""

    return mean_norm + 10 * math.sqrt(max_var * 2 * math.log(max(K, 1) / PROJECTION_FAILURE_PROB))


def privacy_oracle_check(
    n: int,
    eta: float,
    sigma2: float,
    K_max: int,
    alphas: t.Sequence[float] = (2.0, 4.0, 8.0),
    ball: t.Optional[L2Ball] = None,
    d: int = 1,
    norm_bound: float = 1.0,
) -> PrivacyOracleReport:
    """
    Check the privacy bound against the exact divergence of the quadratic specialisation. The two datasets differ
    in one row flipped between opposite points of the data domain, so their means differ by 2B/n. The bound is
    evaluated with λ = β = 1 and L = R + B.

    @raises ConfigurationError: If *ball* is too small for the unprojected model to be accurate.
    @raises VerificationError: If the oracle divergence exceeds the bound at any (k, α).
    """

    if not sigma2 > 0:
        raise InvalidInputError(f"the privacy oracle needs sigma2 > 0, got {sigma2}")
    if n < 2:
        raise InvalidInputError(f"dataset size must be >= 2, got {n}")
    mean = np.zeros(d)
    shifted = mean.copy()
    shifted[0] += 2 * norm_bound / n

    states = gaussian_moments(mean, eta, sigma2, K_max)
    neighbour = gaussian_moments(shifted, eta, sigma2, K_max)
    max_var = max(state.var for state in states)
    needed = required_radius(float(max(np.linalg.norm(mean), np.linalg.norm(shifted))), max_var, K_max)
    if ball is None:
        ball = L2Ball(needed)
    elif ball.radius < needed:
        raise ConfigurationError(
            f"ball radius {ball.radius:.6g} is below {needed:.6g}; projection may fire and the unprojected "
            "oracle would not model the run"
        )

    extremes = np.zeros((2, d))
    extremes[:, 0] = (norm_bound, -norm_bound)
    constants = quadratic_constants(Dataset(extremes, np.zeros(2, dtype=int), norm_bound), ball)
    params = PrivacyParams.of(constants, n, sigma2)
    schedule = Constant(eta)
    report = PrivacyOracleReport(n, eta, sigma2, K_max, tuple(alphas), ball.radius, constants.L)

    for k, (state, other) in enumerate(zip(states, neighbour)):
        for alpha in alphas:
            bound = rdp_general(params.with_alpha(alpha), schedule, k)
            divergence = renyi_gaussian_isotropic(alpha, state.mean, other.mean, state.var)
            report.checks += 1
            if divergence == 0:
                continue
            ratio = divergence / bound if bound > 0 else math.inf
            if ratio > report.max_ratio:
                report.max_ratio = ratio
                report.worst = (k, alpha)
            if divergence > bound:
                report.passed = False
                raise VerificationError(
                    "privacy_oracle",
                    f"divergence {divergence:.6g} exceeds bound {bound:.6g} at k={k}, alpha={alpha}",
                    report,
                )

    logger.info(
        "privacy oracle n=%d eta=%g sigma2=%g: %d checks, max ratio %.3g at %s",
        n,
        eta,
        sigma2,
        report.checks,
        report.max_ratio,
        report.worst,
    )
    return report


def solve_optimum(loss: LossModel, data: Dataset, ball: L2Ball) -> np.ndarray:
    """
    The minimiser θ* of L_D over *ball*. Closed form for the quadratic loss, otherwise deterministic projected
    gradient descent with step 1/β until the norm of the gradient mapping is ≤ #OPTIMUM_TOL.

    @raises ConvergenceError: If the tolerance is not reached within #OPTIMUM_MAX_ITERATIONS iterations.
    """

    if isinstance(loss, QuadraticModel):
        return project(data.features.mean(axis=0), ball)

    beta = loss.constants(data, ball).beta
    full = data.full()
    theta = np.zeros(loss.dimension())
    for iteration in range(OPTIMUM_MAX_ITERATIONS):
        following = project(theta - loss.grad(theta, full) / beta, ball)
        mapping = beta * float(np.linalg.norm(theta - following))
        theta = following
        if mapping <= OPTIMUM_TOL:
            logger.debug("optimum found after %d iterations, gradient mapping %.3g", iteration + 1, mapping)
            return theta
    raise ConvergenceError(f"projected gradient descent did not reach {OPTIMUM_TOL} in {OPTIMUM_MAX_ITERATIONS} steps")


def xi_squared(loss: LossModel, data: Dataset, theta_star: np.ndarray, m: int) -> float:
    """
    ξ² = E‖∇L_B(θ*)‖² for a uniformly random batch of *m* rows without replacement, by the finite-population
    identity ‖ḡ‖² + ((n − m)/(m(n − 1)))·(1/n)Σ‖g_i − ḡ‖².
    """

    n = data.n
    if not 1 <= m <= n:
        raise InvalidInputError(f"batch size must lie in [1, {n}], got {m}")
    grads = loss.example_grads(theta_star, data.full())
    mean = grads.mean(axis=0)
    spread = float(np.mean(np.sum((grads - mean) ** 2, axis=1)))
    return float(mean @ mean) + (n - m) / (m * (n - 1)) * spread


def xi_squared_mc(
    loss: LossModel, data: Dataset, theta_star: np.ndarray, m: int, samples: int, seed: int = 0
) -> t.Tuple[float, float]:
    """Monte-Carlo estimate (mean, standard error) of ξ² over *samples* sampled batches."""

    rng = np.random.default_rng(seed)
    grads = loss.example_grads(theta_star, data.full())
    values = np.empty(samples)
    for i in range(samples):
        g = grads[rng.choice(data.n, size=m, replace=False)].mean(axis=0)
        values[i] = g @ g
    return mean_stderr(values)


def _fixed_terms(
    beta: float, lam: float, eta: float, K: int, d: int, sigma2: float, xi2: float, init_sq: float
) -> t.Dict[str, float]:
    return {
        "initial": beta / 2 * init_sq * math.exp(-lam * eta * K),
        "xi": beta * eta * xi2 / (2 * lam),
        "noise": beta * d * sigma2 / lam,
    }


def risk_bound_fixed(
    beta: float, lam: float, eta: float, K: int, d: int, sigma2: float, xi2: float, init_sq: float
) -> float:
    """(β/2)·init_sq·e^{−ληK} + βηξ²/(2λ) + βdσ²/λ."""

    return sum(_fixed_terms(beta, lam, eta, K, d, sigma2, xi2, init_sq).values())


def risk_envelope_fixed(
    beta: float, lam: float, L: float, eta: float, K: int, d: int, sigma2: float, xi2: float
) -> float:
    """#risk_bound_fixed() with E‖θ₀ − θ*‖² replaced by its envelope 4L²/λ²."""

    return risk_bound_fixed(beta, lam, eta, K, d, sigma2, xi2, 4 * L**2 / lam**2)


def _decreasing_terms(
    beta: float, lam: float, K: int, d: int, sigma2: float, xi2: float, init_sq: float
) -> t.Dict[str, float]:
    if K < 1:
        raise InvalidInputError(f"the average-risk bound needs K >= 1, got {K}")
    return {
        "initial": 2 * beta / K * init_sq,
        "xi": 4 * xi2 / (K * lam) * math.log1p(lam * K / (4 * beta)),
        "noise": 2 * d * sigma2,
    }


def risk_bound_decreasing(
    beta: float, lam: float, K: int, d: int, sigma2: float, xi2: float, init_sq: float
) -> float:
    """(2β/K)·init_sq + (4ξ²/(Kλ))·log(1 + λK/(4β)) + 2dσ²."""

    return sum(_decreasing_terms(beta, lam, K, d, sigma2, xi2, init_sq).values())


@dataclass
class UtilityReport:
    """Outcome of a Monte-Carlo utility check."""

    #: `fixed` (final-iterate excess risk) or `decreasing` (average risk).
    kind: str
    seeds: int
    mc_mean: float
    mc_stderr: float

    #: The bound with the Monte-Carlo estimate of E‖θ₀ − θ*‖².
    bound: float

    #: The bound with the 4L²/λ² envelope.
    envelope: float

    #: Terms of #bound: `initial`, `xi` and `noise`.
    components: t.Dict[str, float] = field(default_factory=dict)

    init_sq: float = 0.0
    xi2: float = 0.0
    passed: bool = True

    @property
    def slack(self) -> float:
        """bound / MC mean, infinite when the Monte-Carlo mean is not positive."""

        return self.bound / self.mc_mean if self.mc_mean > 0 else math.inf

    def to_json(self) -> t.Dict[str, t.Any]:
        return {
            "kind": self.kind,
            "seeds": self.seeds,
            "mc_mean": self.mc_mean,
            "mc_stderr": self.mc_stderr,
            "bound": self.bound,
            "envelope": self.envelope,
            "components": dict(self.components),
            "init_sq": self.init_sq,
            "xi2": self.xi2,
            "slack": self.slack if math.isfinite(self.slack) else None,
            "passed": self.passed,
        }


def _check_seed_count(seeds: int) -> None:
    if seeds < MIN_SEEDS:
        raise InvalidInputError(f"Monte-Carlo oracles need at least {MIN_SEEDS} seeds, got {seeds}")


def _assert_within(report: UtilityReport, assertion: str) -> UtilityReport:
    margin = 3 * report.mc_stderr
    logger.info(
        "%s: MC %.6g +- %.3g, bound %.6g, envelope %.6g, slack %.3g",
        assertion,
        report.mc_mean,
        report.mc_stderr,
        report.bound,
        report.envelope,
        report.slack,
    )
    for name, value in (("bound", report.bound), ("envelope", report.envelope)):
        if report.mc_mean > value + margin:
            report.passed = False
            raise VerificationError(
                assertion,
                f"Monte-Carlo risk {report.mc_mean:.6g} +- {report.mc_stderr:.3g} exceeds the {name} {value:.6g}",
                report,
            )
    return report


def excess_risk_mc(
    config: TrainConfig, data: Dataset, loss: LossModel, seeds: int = MIN_SEEDS, workers: t.Optional[int] = None
) -> UtilityReport:
    """
    Run DP-SGLD with a constant step once per seed (`config.seed + i`) and compare the mean excess risk
    L_D(θ_K) − L_D(θ*) with #risk_bound_fixed() and #risk_envelope_fixed().

    @raises PreconditionError: If η > 1/(2β).
    @raises VerificationError: If the Monte-Carlo mean exceeds either bound by more than three standard errors.
    """

    _check_seed_count(seeds)
    if not isinstance(config.schedule, Constant):
        raise InvalidInputError("the excess-risk oracle needs a constant step size")
    constants = loss.constants(data, config.ball)
    check_schedule(config.schedule, config.iterations, constants.beta, "utility")
    K = config.iterations
    eta = config.schedule.value
    theta_star = solve_optimum(loss, data, config.ball)
    optimum = loss.value(theta_star, data.full())
    xi2 = xi_squared(loss, data, theta_star, config.batch_size)

    def run(seed: int) -> t.Tuple[float, float]:
        run_config = config.replace(
            seed=RunSeed(seed), mode="utility", snapshot_stride=max(K, 1), record_loss=False
        )
        trajectory = dp_sgld_train(run_config, data, loss)
        theta0 = trajectory.snapshots[0][1]
        return loss.value(trajectory.final, data.full()) - optimum, float(np.sum((theta0 - theta_star) ** 2))

    results = map_seeds(run, [config.seed.seed + i for i in range(seeds)], workers)
    mc_mean, mc_stderr = mean_stderr([r[0] for r in results])
    init_sq = float(np.mean([r[1] for r in results]))
    d = loss.dimension()
    components = _fixed_terms(constants.beta, constants.lam, eta, K, d, config.sigma2, xi2, init_sq)
    report = UtilityReport(
        kind="fixed",
        seeds=seeds,
        mc_mean=mc_mean,
        mc_stderr=mc_stderr,
        bound=sum(components.values()),
        envelope=risk_envelope_fixed(constants.beta, constants.lam, constants.L, eta, K, d, config.sigma2, xi2),
        components=components,
        init_sq=init_sq,
        xi2=xi2,
    )
    return _assert_within(report, "excess_risk")


def avg_risk_mc(
    config: TrainConfig, data: Dataset, loss: LossModel, seeds: int = MIN_SEEDS, workers: t.Optional[int] = None
) -> UtilityReport:
    """
    Run DP-SGLD with the decreasing step η_k = 1/(2β + λk/2) once per seed and compare the mean of
    (1/K)Σ_{k<K} L_D(θ_k) − L_D(θ*) with #risk_bound_decreasing() and its envelope.
    """

    _check_seed_count(seeds)
    if not isinstance(config.schedule, Decreasing):
        raise InvalidInputError("the average-risk oracle needs the decreasing step schedule")
    K = config.iterations
    if K < 1:
        raise InvalidInputError(f"the average-risk oracle needs K >= 1, got {K}")
    constants = loss.constants(data, config.ball)
    check_schedule(config.schedule, K, constants.beta, "utility")
    theta_star = solve_optimum(loss, data, config.ball)
    optimum = loss.value(theta_star, data.full())
    xi2 = xi_squared(loss, data, theta_star, config.batch_size)

    def run(seed: int) -> t.Tuple[float, float]:
        run_config = config.replace(seed=RunSeed(seed), mode="utility", snapshot_stride=1, record_loss=True)
        trajectory = dp_sgld_train(run_config, data, loss)
        theta0 = trajectory.snapshots[0][1]
        average = float(np.mean([value for k, value in trajectory.losses if k < K]))
        return average - optimum, float(np.sum((theta0 - theta_star) ** 2))

    results = map_seeds(run, [config.seed.seed + i for i in range(seeds)], workers)
    mc_mean, mc_stderr = mean_stderr([r[0] for r in results])
    init_sq = float(np.mean([r[1] for r in results]))
    d = loss.dimension()
    beta, lam = constants.beta, constants.lam
    components = _decreasing_terms(beta, lam, K, d, config.sigma2, xi2, init_sq)
    report = UtilityReport(
        kind="decreasing",
        seeds=seeds,
        mc_mean=mc_mean,
        mc_stderr=mc_stderr,
        bound=sum(components.values()),
        envelope=risk_bound_decreasing(beta, lam, K, d, config.sigma2, xi2, 4 * constants.L**2 / lam**2),
        components=components,
        init_sq=init_sq,
        xi2=xi2,
    )
    return _assert_within(report, "avg_risk")
