"""
Privacy mathematics for DP-SGLD.

The Rényi bound for releasing θ_K is

    ε(α) = 4αL²/(λn²σ²) · (1 − exp(−(λ/2) Σ_{k<K} η_k)),

which converges to the asymptote 4αL²/(λn²σ²) instead of growing linearly in K. The batch size *m* appears in no
bound: the sensitivity of the mean gradient across neighbouring datasets is 2L/n whatever the batch size, so every
function here ignores *m* on purpose.

All bounds are evaluated in float64 with `expm1` for `1 − e^{−x}`.
"""

import logging
import math
import typing as t
from dataclasses import dataclass, field, replace

import numpy as np

from ._errors import InfeasibleCalibrationError, InvalidInputError, PreconditionError
from ._losses import LossConstants
from ._types import Constant, Decreasing, StepSchedule

logger = logging.getLogger(__name__)

#: Default Rényi orders searched by #optimize_alpha().
DEFAULT_ALPHAS: t.Tuple[float, ...] = (1.25, 1.5) + tuple(float(a) for a in range(2, 65))


@dataclass(frozen=True)
class PrivacyParams:
    """The symbols of the DP-SGLD privacy theorem. The LSI constant is c = λ/(2σ²)."""

    alpha: float
    L: float
    lam: float
    beta: float
    n: int
    sigma2: float
    d: int = 1

    def __post_init__(self) -> None:
        if not self.alpha > 1:
            raise InvalidInputError(f"Renyi order must be > 1, got {self.alpha}")
        if self.n < 1:
            raise InvalidInputError(f"dataset size must be >= 1, got {self.n}")
        if not (math.isfinite(self.sigma2) and self.sigma2 > 0):
            raise InvalidInputError(f"noise variance must be positive, got {self.sigma2}")
        if not (0 < self.lam <= self.beta and self.L > 0):
            raise InvalidInputError(f"need L > 0 and 0 < lambda <= beta, got {self.L}, {self.lam}, {self.beta}")

    @classmethod
    def of(cls, constants: LossConstants, n: int, sigma2: float, alpha: float = 2.0, d: int = 1) -> "PrivacyParams":
        return cls(alpha, constants.L, constants.lam, constants.beta, n, sigma2, d)

    @property
    def c(self) -> float:
        return self.lam / (2 * self.sigma2)

    def with_alpha(self, alpha: float) -> "PrivacyParams":
        return replace(self, alpha=alpha)


def asymptote(p: PrivacyParams) -> float:
    """The limit 4αL²/(λn²σ²) of the bound as Σ η_k → ∞."""

    return 4 * p.alpha * p.L**2 / (p.lam * p.n**2 * p.sigma2)


def _check_cap(p: PrivacyParams, schedule: StepSchedule, K: int) -> None:
    worst = schedule.max_eta(K)
    if K > 0 and not worst < 1 / p.beta:
        raise PreconditionError(f"the privacy bound needs eta_k < 1/beta = {1 / p.beta:.6g}, got {worst:.6g}")


def _erosion(p: PrivacyParams, elapsed: float) -> float:
    return asymptote(p) * -math.expm1(-(p.lam / 2) * elapsed)


def rdp_general(p: PrivacyParams, schedule: StepSchedule, K: int) -> float:
    """
    Rényi bound after *K* steps of an arbitrary schedule, using the exact partial sum of its step sizes.

    @raises PreconditionError: If some η_k ≥ 1/β.
    """

    _check_cap(p, schedule, K)
    return _erosion(p, schedule.total(K))


def rdp_constant(p: PrivacyParams, eta: float, K: int) -> float:
    """Closed form for a constant step: asymptote · (1 − e^{−ληK/2})."""

    return rdp_general(p, Constant(eta), K)


def rdp_decreasing(p: PrivacyParams, K: int) -> float:
    """Closed form for η_k = 1/(2β + λk/2): asymptote · λK/(4β + λK)."""

    if K < 0:
        raise InvalidInputError(f"step count must be >= 0, got {K}")
    return asymptote(p) * (p.lam * K) / (4 * p.beta + p.lam * K)


def rdp_clsi(
    alpha: float, L: float, c: float, n: int, sigma2: float, schedule: StepSchedule, K: int
) -> float:
    """
    The bound for any process satisfying c-LSI: 2αL²/(cn²σ⁴) · (1 − e^{−σ²c Σ η_k}). With c = λ/(2σ²) it is
    #rdp_general().
    """

    if not c > 0:
        raise InvalidInputError(f"LSI constant must be positive, got {c}")
    if not (alpha > 1 and sigma2 > 0 and n >= 1):
        raise InvalidInputError("need alpha > 1, sigma2 > 0 and n >= 1")
    scale = 2 * alpha * L**2 / (c * n**2 * sigma2**2)
    return scale * -math.expm1(-sigma2 * c * schedule.total(K))


def rdp_recursion_path(p: PrivacyParams, schedule: StepSchedule, K: int) -> np.ndarray:
    """
    The per-step recursion R ← (R − R*)·e^{−a₁η_k} + R* from R = 0, with a₁ = σ²c, a₂ = 2L²/(σ²n²) and
    fixed point R* = (a₂/a₁)·α. Returns R after 0, 1, …, K steps.
    """

    _check_cap(p, schedule, K)
    a1 = p.sigma2 * p.c
    a2 = 2 * p.L**2 / (p.sigma2 * p.n**2)
    fixed = a2 / a1 * p.alpha
    path = np.zeros(K + 1)
    R = 0.0
    for k, eta in enumerate(schedule.etas(K)):
        # Same update as (R - fixed) * exp(-a1 eta) + fixed, without cancellation at small a1 eta.
        R = R * math.exp(-a1 * eta) - fixed * math.expm1(-a1 * eta)
        path[k + 1] = R
    return path


def rdp_recursion(p: PrivacyParams, schedule: StepSchedule, K: int) -> float:
    return float(rdp_recursion_path(p, schedule, K)[-1])


def to_dp(eps_rdp: float, alpha: float, delta: float) -> float:
    """Convert an (α, ε) Rényi guarantee to (ε + log(1/δ)/(α − 1), δ)."""

    if not 0 < delta < 1:
        raise InvalidInputError(f"delta must lie in (0, 1), got {delta}")
    if not alpha > 1:
        raise InvalidInputError(f"Renyi order must be > 1, got {alpha}")
    return eps_rdp + math.log(1 / delta) / (alpha - 1)


def closed_form_alpha(epsilon: float, delta: float) -> float:
    """The order α = 1 + (2/ε)·log(1/δ) that splits an (ε, δ) budget evenly between the two conversion terms."""

    return 1 + 2 / epsilon * math.log(1 / delta)


def alpha_grid(target_epsilon: t.Optional[float] = None, delta: t.Optional[float] = None) -> t.List[float]:
    grid = set(DEFAULT_ALPHAS)
    if target_epsilon is not None and delta is not None:
        grid.add(closed_form_alpha(target_epsilon, delta))
    return sorted(grid)


def optimize_alpha(
    p: PrivacyParams,
    schedule: StepSchedule,
    K: int,
    delta: float,
    alphas: t.Optional[t.Iterable[float]] = None,
) -> t.Tuple[float, float]:
    """
    Search the grid of Rényi orders for the smallest converted ε. The order carried by *p* is ignored. Ties go
    to the smaller order.
    """

    grid = sorted(alphas) if alphas is not None else alpha_grid()
    if not grid:
        raise InvalidInputError("empty alpha grid")
    best: t.Optional[t.Tuple[float, float]] = None
    for alpha in grid:
        eps = to_dp(rdp_general(p.with_alpha(alpha), schedule, K), alpha, delta)
        if best is None or eps < best[1]:
            best = (alpha, eps)
    assert best is not None
    return best


def composition_baseline(alpha: float, L: float, n: int, sigma2: float, eta: float, K: int) -> float:
    """The linear-in-K composition estimate ε′ = αL²ηK/(n²σ²)."""

    return alpha * L**2 * eta * K / (n**2 * sigma2)


@dataclass(frozen=True)
class Calibration:
    """Noise variance and iteration count derived from a utility theorem."""

    sigma2: float
    iterations: int
    alpha: float

    #: `constant` (η = 1/(2β)) or `decreasing` (η_k = 1/(2β + λk/2)).
    schedule: str

    #: r / (β/λ)² for the ratio r that sets the iteration count (εn²/(αd) for Rényi targets,
    #: ε²n²/(4 log(1/δ) d) for (ε, δ) targets), see #regime_ratio().
    regime_ratio: float

    def make_schedule(self, lam: float, beta: float) -> StepSchedule:
        if self.schedule == "decreasing":
            return Decreasing(beta, lam)
        return Constant(1 / (2 * beta))


def _regime(ratio: float, lam: float, beta: float) -> float:
    return ratio / (beta / lam) ** 2


def regime_ratio(epsilon: float, alpha: float, lam: float, beta: float, n: int, d: int) -> float:
    """
    (εn²/(αd)) / (β/λ)². Below one the decreasing-step calibration grows K like n², above one like n⁴.
    """

    return _regime(epsilon * n**2 / (alpha * d), lam, beta)


def _check_dp_target(epsilon: float, delta: float) -> None:
    if not 0 < delta < 1:
        raise InvalidInputError(f"delta must lie in (0, 1), got {delta}")
    if not epsilon > 0:
        raise InvalidInputError(f"epsilon must be positive, got {epsilon}")
    if epsilon > 2 * math.log(1 / delta):
        raise InfeasibleCalibrationError(
            f"the (epsilon, delta) calibration needs epsilon <= 2 log(1/delta) = {2 * math.log(1 / delta):.6g}, "
            f"got {epsilon}"
        )


def calibrate_rdp(epsilon: float, alpha: float, L: float, lam: float, beta: float, n: int, d: int) -> Calibration:
    """
    σ² = 4αL²/(ελn²) and K = ⌈(2β/λ)·log(εn²/(αd))⌉ for the constant step η = 1/(2β).

    @raises InfeasibleCalibrationError: If εn² ≤ αd.
    """

    if not (epsilon > 0 and alpha > 1):
        raise InvalidInputError(f"need epsilon > 0 and alpha > 1, got {epsilon}, {alpha}")
    ratio = epsilon * n**2 / (alpha * d)
    if ratio <= 1:
        raise InfeasibleCalibrationError(f"need epsilon n^2 > alpha d, got {epsilon * n**2:.6g} <= {alpha * d:.6g}")
    sigma2 = 4 * alpha * L**2 / (epsilon * lam * n**2)
    K = math.ceil(2 * beta / lam * math.log(ratio))
    if K <= 0:
        raise InfeasibleCalibrationError("calibrated iteration count is zero")
    result = Calibration(sigma2, K, alpha, "constant", regime_ratio(epsilon, alpha, lam, beta, n, d))
    logger.info("calibrated (alpha=%g, eps=%g): sigma2=%.6g K=%d", alpha, epsilon, sigma2, K)
    return result


def calibrate_dp(epsilon: float, delta: float, L: float, lam: float, beta: float, n: int, d: int) -> Calibration:
    """
    α = 1 + (2/ε)·log(1/δ), σ² = 8L²(ε + 2 log(1/δ))/(ε²λn²) and K = ⌈(2β/λ)·log(ε²n²/(4 log(1/δ) d))⌉.

    @raises InfeasibleCalibrationError: If ε > 2 log(1/δ) or the argument of the logarithm is ≤ 1.
    """

    _check_dp_target(epsilon, delta)
    log_inv = math.log(1 / delta)
    alpha = closed_form_alpha(epsilon, delta)
    sigma2 = 8 * L**2 * (epsilon + 2 * log_inv) / (epsilon**2 * lam * n**2)
    argument = epsilon**2 * n**2 / (4 * log_inv * d)
    if argument <= 1:
        raise InfeasibleCalibrationError(f"need epsilon^2 n^2 > 4 log(1/delta) d, ratio is {argument:.6g}")
    K = math.ceil(2 * beta / lam * math.log(argument))
    result = Calibration(sigma2, K, alpha, "constant", _regime(argument, lam, beta))
    logger.info("calibrated (eps=%g, delta=%g): alpha=%.6g sigma2=%.6g K=%d", epsilon, delta, alpha, sigma2, K)
    return result


def _decreasing_iterations(ratio: float, lam: float, beta: float) -> int:
    return math.ceil(max(beta / lam * ratio, lam / beta * ratio**2))


def calibrate_decreasing(
    epsilon: float, alpha: float, L: float, lam: float, beta: float, n: int, d: int
) -> Calibration:
    """σ² = 4αL²/(ελn²) and K = ⌈max((β/λ)·r, (λ/β)·r²)⌉ with r = εn²/(αd), for η_k = 1/(2β + λk/2)."""

    if not (epsilon > 0 and alpha > 1):
        raise InvalidInputError(f"need epsilon > 0 and alpha > 1, got {epsilon}, {alpha}")
    ratio = epsilon * n**2 / (alpha * d)
    sigma2 = 4 * alpha * L**2 / (epsilon * lam * n**2)
    K = _decreasing_iterations(ratio, lam, beta)
    return Calibration(sigma2, K, alpha, "decreasing", regime_ratio(epsilon, alpha, lam, beta, n, d))


def calibrate_dp_decreasing(
    epsilon: float, delta: float, L: float, lam: float, beta: float, n: int, d: int
) -> Calibration:
    """The (ε, δ) variant of #calibrate_decreasing() with r = ε²n²/(4 log(1/δ) d)."""

    _check_dp_target(epsilon, delta)
    log_inv = math.log(1 / delta)
    alpha = closed_form_alpha(epsilon, delta)
    sigma2 = 8 * L**2 * (epsilon + 2 * log_inv) / (epsilon**2 * lam * n**2)
    ratio = epsilon**2 * n**2 / (4 * log_inv * d)
    K = _decreasing_iterations(ratio, lam, beta)
    return Calibration(sigma2, K, alpha, "decreasing", _regime(ratio, lam, beta))


def utility_bound_rdp(
    alpha: float, epsilon: float, L: float, lam: float, beta: float, n: int, d: int, xi2: float
) -> float:
    """Excess risk at the constant-step calibration: 6αβdL²/(ελ²n²) + ξ²/(4λ)."""

    return 6 * alpha * beta * d * L**2 / (epsilon * lam**2 * n**2) + xi2 / (4 * lam)


def utility_bound_dp(
    epsilon: float, delta: float, L: float, lam: float, beta: float, n: int, d: int, xi2: float
) -> float:
    return 48 * beta * d * L**2 * math.log(1 / delta) / (epsilon**2 * lam**2 * n**2) + xi2 / (4 * lam)


def utility_bound_rdp_decreasing(alpha: float, epsilon: float, L: float, lam: float, n: int, d: int) -> float:
    """Average risk at the decreasing-step calibration: 18αdL²/(ελn²). The ξ² term is absorbed."""

    return 18 * alpha * d * L**2 / (epsilon * lam * n**2)


def utility_bound_dp_decreasing(epsilon: float, delta: float, L: float, lam: float, n: int, d: int) -> float:
    return 144 * d * L**2 * math.log(1 / delta) / (epsilon**2 * lam * n**2)


@dataclass
class PrivacyReport:
    """The privacy of one configuration: the Rényi curve, the best (ε, δ) and the comparison points."""

    #: `(α, ε_rdp(α))` over the searched grid.
    curve: t.List[t.Tuple[float, float]] = field(default_factory=list)
    alpha: float = 0.0
    epsilon: float = 0.0
    delta: float = 0.0

    #: Composition baseline ε′ at #alpha, using the mean step size of the schedule.
    baseline: float = 0.0

    #: 4αL²/(λn²σ²) at #alpha. `None` for reports without a finite limit (plain composition).
    asymptote: t.Optional[float] = 0.0

    iterations: int = 0

    def to_json(self) -> t.Dict[str, t.Any]:
        return {
            "alpha": self.alpha,
            "epsilon": self.epsilon,
            "delta": self.delta,
            "epsilon_rdp": dict(self.curve).get(self.alpha),
            "baseline": self.baseline,
            "asymptote": self.asymptote,
            "iterations": self.iterations,
            "curve": [{"alpha": a, "epsilon_rdp": e} for a, e in self.curve],
        }


def privacy_report(
    p: PrivacyParams,
    schedule: StepSchedule,
    K: int,
    delta: float,
    alphas: t.Optional[t.Iterable[float]] = None,
) -> PrivacyReport:
    grid = sorted(alphas) if alphas is not None else alpha_grid()
    curve = [(alpha, rdp_general(p.with_alpha(alpha), schedule, K)) for alpha in grid]
    alpha, epsilon = optimize_alpha(p, schedule, K, delta, grid)
    at_alpha = p.with_alpha(alpha)
    mean_eta = schedule.total(K) / K if K else 0.0
    for a, e in curve:
        if not (math.isfinite(e) and e >= 0):
            raise PreconditionError(f"Renyi curve is not finite and nonnegative at alpha={a}: {e}")
    return PrivacyReport(
        curve=curve,
        alpha=alpha,
        epsilon=epsilon,
        delta=delta,
        baseline=composition_baseline(alpha, p.L, p.n, p.sigma2, mean_eta, K),
        asymptote=asymptote(at_alpha),
        iterations=K,
    )


def composition_report(
    clip_norm: float,
    n: int,
    sigma2: float,
    schedule: StepSchedule,
    K: int,
    delta: float,
    alphas: t.Optional[t.Iterable[float]] = None,
) -> PrivacyReport:
    """
    Report for the clipped-gradient baseline: K full-batch Gaussian steps with sensitivity 2C/n compose to
    αC²(Σ η_k)/(n²σ²), which is #composition_baseline() with L = C.
    """

    if not (sigma2 > 0 and clip_norm > 0):
        raise InvalidInputError(f"need sigma2 > 0 and a positive clip norm, got {sigma2}, {clip_norm}")
    grid = sorted(alphas) if alphas is not None else alpha_grid()
    elapsed = schedule.total(K)
    curve = [(alpha, composition_baseline(alpha, clip_norm, n, sigma2, elapsed, 1)) for alpha in grid]
    alpha, epsilon = min(((a, to_dp(e, a, delta)) for a, e in curve), key=lambda pair: pair[1])
    return PrivacyReport(
        curve=curve,
        alpha=alpha,
        epsilon=epsilon,
        delta=delta,
        baseline=dict(curve)[alpha],
        asymptote=None,
        iterations=K,
    )
