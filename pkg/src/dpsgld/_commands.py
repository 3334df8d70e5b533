"""
The operations behind the command line. Each `cmd_*` function returns an in-memory result; writing files and
choosing exit codes is left to `__main__`.
"""

import dataclasses
import datetime
import itertools
import logging
import math
import typing as t
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from ._accountant import (
    Calibration,
    PrivacyParams,
    PrivacyReport,
    alpha_grid,
    asymptote,
    calibrate_decreasing,
    calibrate_dp,
    calibrate_dp_decreasing,
    calibrate_rdp,
    composition_baseline,
    composition_report,
    optimize_alpha,
    privacy_report,
    rdp_clsi,
    rdp_constant,
    rdp_decreasing,
    rdp_general,
    rdp_recursion_path,
    to_dp,
    utility_bound_dp,
    utility_bound_dp_decreasing,
    utility_bound_rdp,
    utility_bound_rdp_decreasing,
)
from ._config import RunConfigFile, config_schema
from ._errors import ConfigurationError, DpsgldError, InvalidInputError, VerificationError
from ._io import load_csv, make_blobs, write_json, write_table
from ._losses import LogisticModel, LossConstants, QuadraticModel, default_radius
from ._oracle import avg_risk_mc, excess_risk_mc, privacy_oracle_check, xi_squared
from ._sgld import Method, TrainConfig, iterations_for_epochs, train
from ._types import Batch, Constant, Dataset, Decreasing, Explicit, L2Ball, RunSeed, StepSchedule
from ._util import map_seeds, mean_stderr

logger = logging.getLogger(__name__)

#: Version of the layout of `report.json`.
SCHEMA_VERSION = 1

#: Upper bound on the number of rows of an ε-vs-K curve emitted with a training report.
CURVE_POINTS = 101

#: Random explicit schedules checked against the recursion, and their largest length.
IDENTITY_SCHEDULES = 50
IDENTITY_MAX_STEPS = 10_000

#: Rows of the dataset whose batches are enumerated exhaustively for ξ².
XI_ENUMERATION_ROWS = 12

#: Random points of the gradient suite, and random pairs tested against the loss certificates.
GRADIENT_POINTS = 100
CERTIFICATE_PAIRS = 1000
FINITE_DIFFERENCE_STEP = 1e-5

#: Default number of Monte-Carlo seeds of the utility suite.
VERIFY_SEEDS = 200

Model = t.Union[LogisticModel, QuadraticModel]


@dataclass
class Prepared:
    """A configuration resolved against its data: loaded datasets, certified constants and the final σ², K."""

    config: RunConfigFile
    train: Dataset
    test: t.Optional[Dataset]
    model: Model
    ball: L2Ball
    constants: LossConstants
    schedule: StepSchedule
    sigma2: float
    iterations: int
    delta: float
    alphas: t.List[float]
    rescaled: int = 0
    source: str = ""

    @property
    def dimension(self) -> int:
        return self.model.dimension()

    def train_config(self, seed: t.Optional[int] = None) -> TrainConfig:
        config = self.config
        return TrainConfig(
            batch_size=config.batch_size,
            iterations=self.iterations,
            sigma2=self.sigma2,
            schedule=self.schedule,
            ball=self.ball,
            seed=RunSeed(config.seed if seed is None else seed),
            snapshot_stride=config.snapshot_stride,
            record_loss=config.snapshot_stride > 0,
        )


def _load_data(config: RunConfigFile) -> t.Tuple[Dataset, t.Optional[Dataset], int, str]:
    if config.blobs is not None:
        b = config.blobs
        train_set, test_set = make_blobs(b.n, b.p, b.classes, b.separation, b.seed, config.norm_bound)
        return train_set, test_set, 0, "blobs"
    assert config.dataset is not None
    loaded = load_csv(config.dataset, config.norm_bound, config.label_column)
    train_set, rescaled = loaded.data, loaded.rescaled
    test_set = None
    if config.test_dataset is not None:
        held_out = load_csv(config.test_dataset, config.norm_bound, config.label_column)
        test_set, rescaled = held_out.data, rescaled + held_out.rescaled
        if test_set.p != train_set.p:
            raise ConfigurationError(f"test set has {test_set.p} features, training set has {train_set.p}")
        classes = max(train_set.classes, test_set.classes)
        train_set = dataclasses.replace(train_set, classes=classes)
        test_set = dataclasses.replace(test_set, classes=classes)
    return train_set, test_set, rescaled, Path(config.dataset).stem


def _make_schedule(config: RunConfigFile, constants: LossConstants) -> StepSchedule:
    spec = config.schedule
    if spec.kind == "decreasing":
        return Decreasing(constants.beta, constants.lam)
    if spec.kind == "explicit":
        assert spec.etas is not None
        return Explicit(tuple(spec.etas))
    return Constant(spec.eta if spec.eta is not None else 1 / (2 * constants.beta))


def prepare(config: RunConfigFile) -> Prepared:
    """
    Load the data, certify the loss constants and resolve σ² and K, calibrating them from the privacy target
    when the configuration has one.

    @raises InfeasibleCalibrationError: If the target cannot be met.
    @raises ConfigurationError: If the iteration count cannot be determined.
    """

    train_set, test_set, rescaled, source = _load_data(config)
    model: Model
    if config.loss == "logistic":
        model = LogisticModel.for_dataset(train_set, config.reg)
        radius = config.radius or model.default_radius()
    else:
        model = QuadraticModel(train_set.p)
        radius = config.radius or default_radius(model.value(np.zeros(train_set.p), train_set.full()), 1.0)
    ball = L2Ball(radius if radius > 0 else config.norm_bound)
    constants = model.constants(train_set, ball)
    d = model.dimension()

    calibrated_iterations: t.Optional[int] = None
    if config.target is not None:
        target = config.target
        calibrate = calibrate_dp_decreasing if config.schedule.kind == "decreasing" else calibrate_dp
        calibration = calibrate(
            target.epsilon, target.delta, constants.L, constants.lam, constants.beta, train_set.n, d
        )
        sigma2, delta, calibrated_iterations = calibration.sigma2, target.delta, calibration.iterations
        alphas = config.alphas or alpha_grid(target.epsilon, target.delta)
    else:
        assert config.sigma2 is not None
        sigma2, delta = config.sigma2, config.delta
        alphas = config.alphas or alpha_grid()

    if config.iterations is not None:
        iterations = config.iterations
    elif config.epochs is not None:
        iterations = iterations_for_epochs(train_set.n, config.batch_size, config.epochs)
    elif calibrated_iterations is not None:
        iterations = calibrated_iterations
    else:
        raise ConfigurationError("one of 'iterations', 'epochs' or 'target' must determine the iteration count")

    logger.info(
        "prepared %s: n=%d d=%d L=%.6g lambda=%.6g beta=%.6g R=%.6g sigma2=%.6g K=%d",
        source,
        train_set.n,
        d,
        constants.L,
        constants.lam,
        constants.beta,
        ball.radius,
        sigma2,
        iterations,
    )
    return Prepared(
        config=config,
        train=train_set,
        test=test_set,
        model=model,
        ball=ball,
        constants=constants,
        schedule=_make_schedule(config, constants),
        sigma2=sigma2,
        iterations=iterations,
        delta=delta,
        alphas=sorted(alphas),
        rescaled=rescaled,
        source=source,
    )


def privacy_for(prepared: Prepared, method: Method) -> t.Optional[PrivacyReport]:
    """The privacy report of a run, or `None` for non-private runs."""

    if method is Method.SGD or prepared.sigma2 == 0:
        return None
    if method is Method.SGD_DP:
        return composition_report(
            prepared.config.clip_norm,
            prepared.train.n,
            prepared.sigma2,
            prepared.schedule,
            prepared.iterations,
            prepared.delta,
            prepared.alphas,
        )
    params = PrivacyParams.of(prepared.constants, prepared.train.n, prepared.sigma2, d=prepared.dimension)
    return privacy_report(params, prepared.schedule, prepared.iterations, prepared.delta, prepared.alphas)


def evaluate(prepared: Prepared, theta: np.ndarray) -> t.Dict[str, float]:
    """Empirical risk and accuracy (NaN for the quadratic loss or a missing test set)."""

    model = prepared.model
    row = {"train_risk": model.value(theta, prepared.train.full()), "test_risk": math.nan}
    row["train_accuracy"] = row["test_accuracy"] = math.nan
    if isinstance(model, LogisticModel):
        row["train_accuracy"] = model.accuracy(theta, prepared.train)
    if prepared.test is not None:
        row["test_risk"] = model.value(theta, prepared.test.full())
        if isinstance(model, LogisticModel):
            row["test_accuracy"] = model.accuracy(theta, prepared.test)
    return row


def _plain(value: t.Any) -> t.Any:
    value = value.item() if isinstance(value, np.generic) else value
    return None if isinstance(value, float) and math.isnan(value) else value


@dataclass
class ReportBundle:
    """Everything a training run emits."""

    #: One row per evaluation point: `iteration`, `train_risk`, `test_risk`, `train_accuracy`, `test_accuracy`.
    metrics: pd.DataFrame

    #: `None` for non-private runs.
    privacy: t.Optional[PrivacyReport]

    #: Echo of L, λ, β, R, c and the resolved σ², K.
    constants: t.Dict[str, t.Any]

    #: Config hash, seed, tool version, method and creation time.
    provenance: t.Dict[str, t.Any]

    #: ε against K for the run parameters, see #cmd_account().
    epsilon_curve: t.Optional[pd.DataFrame] = None

    def to_json(self) -> t.Dict[str, t.Any]:
        final = self.metrics.iloc[-1].to_dict()
        return {
            "schema_version": SCHEMA_VERSION,
            "constants": self.constants,
            "privacy": self.privacy.to_json() if self.privacy is not None else None,
            "provenance": self.provenance,
            "final": {key: _plain(value) for key, value in final.items()},
        }

    def write(self, out: t.Union[str, Path]) -> Path:
        directory = Path(out)
        directory.mkdir(parents=True, exist_ok=True)
        write_json(directory / "report.json", self.to_json())
        write_table(directory / "metrics.csv", self.metrics)
        if self.epsilon_curve is not None:
            write_table(directory / "epsilon_curve.csv", self.epsilon_curve)
        return directory


def _curve_points(K: int, points: int = CURVE_POINTS) -> t.List[int]:
    return sorted(set(int(k) for k in np.linspace(0, K, min(points, K + 1)).round()))


def cmd_train(config: RunConfigFile) -> ReportBundle:
    """Train with the configured method and attach the metrics, privacy report and provenance of the run."""

    from . import __version__

    prepared = prepare(config)
    method = Method(config.method)
    trajectory = train(method, prepared.train_config(), prepared.train, prepared.model, config.clip_norm)

    points = list(trajectory.snapshots)
    if not points or points[-1][0] != prepared.iterations:
        points.append((prepared.iterations, trajectory.final))
    metrics = pd.DataFrame([{"iteration": k, **evaluate(prepared, theta)} for k, theta in points])

    privacy = privacy_for(prepared, method)
    curve = None
    if privacy is not None and method is Method.SGLD:
        params = PrivacyParams.of(prepared.constants, prepared.train.n, prepared.sigma2, privacy.alpha)
        curve = cmd_account(
            params, prepared.schedule, _curve_points(prepared.iterations), prepared.delta, prepared.alphas
        )

    c = prepared.constants
    constants = {
        "L": c.L,
        "lam": c.lam,
        "beta": c.beta,
        "R": prepared.ball.radius,
        "c": c.lam / (2 * prepared.sigma2) if prepared.sigma2 > 0 else None,
        "sigma2": prepared.sigma2,
        "iterations": prepared.iterations,
        "eta0": prepared.schedule.eta(0) if prepared.iterations else None,
        "n": prepared.train.n,
        "d": prepared.dimension,
        "batch_size": config.batch_size,
    }
    provenance = {
        "config_hash": config.digest(),
        "seed": config.seed,
        "version": __version__,
        "method": method.value,
        "source": prepared.source,
        "rescaled_rows": prepared.rescaled,
        "created": datetime.datetime.now(datetime.timezone.utc).isoformat(),
    }
    return ReportBundle(metrics, privacy, constants, provenance, curve)


def cmd_account(
    params: PrivacyParams,
    schedule: StepSchedule,
    ks: t.Sequence[int],
    delta: float,
    alphas: t.Optional[t.Sequence[float]] = None,
) -> pd.DataFrame:
    """
    ε against K. Columns:

    * `iterations`: K
    * `alpha`: the order of *params*, used by every column but `alpha_opt` and `epsilon_dp_opt`
    * `delta`: the δ of both converted columns
    * `epsilon_rdp`: #rdp_general() with the exact step sum
    * `epsilon_closed`: #rdp_constant() or #rdp_decreasing() for those schedules, empty otherwise
    * `epsilon_dp`: `epsilon_rdp` converted at `alpha`
    * `alpha_opt`: the grid order that minimises the converted ε
    * `epsilon_dp_opt`: the converted ε at `alpha_opt`
    * `baseline`: the linear composition estimate αL²(Σ η_k)/(n²σ²)
    * `asymptote`: 4αL²/(λn²σ²)
    """

    rows = []
    limit = asymptote(params)
    for K in ks:
        eps = rdp_general(params, schedule, K)
        if isinstance(schedule, Constant):
            closed = rdp_constant(params, schedule.value, K)
        elif isinstance(schedule, Decreasing):
            closed = rdp_decreasing(params, K)
        else:
            closed = math.nan
        alpha_opt, eps_opt = optimize_alpha(params, schedule, K, delta, alphas)
        rows.append(
            {
                "iterations": K,
                "alpha": params.alpha,
                "delta": delta,
                "epsilon_rdp": eps,
                "epsilon_closed": closed,
                "epsilon_dp": to_dp(eps, params.alpha, delta),
                "alpha_opt": alpha_opt,
                "epsilon_dp_opt": eps_opt,
                "baseline": composition_baseline(params.alpha, params.L, params.n, params.sigma2, schedule.total(K), 1),
                "asymptote": limit,
            }
        )
    return pd.DataFrame(rows)


def cmd_calibrate(
    epsilon: float,
    L: float,
    lam: float,
    beta: float,
    n: int,
    d: int,
    delta: t.Optional[float] = None,
    alpha: t.Optional[float] = None,
    xi2: float = 0.0,
) -> pd.DataFrame:
    """
    σ², K and α for every applicable calibration, constant and decreasing step side by side: the Rényi variants
    when *alpha* is given, the (ε, δ) variants when *delta* is given. `utility_bound` is the excess-risk bound
    of the matching utility theorem with the given ξ².
    """

    if delta is None and alpha is None:
        raise InvalidInputError("calibration needs a Renyi order, a delta, or both")
    rows: t.List[t.Tuple[str, Calibration, float]] = []
    if alpha is not None:
        fixed = calibrate_rdp(epsilon, alpha, L, lam, beta, n, d)
        rows.append(("rdp", fixed, utility_bound_rdp(alpha, epsilon, L, lam, beta, n, d, xi2)))
        decreasing = calibrate_decreasing(epsilon, alpha, L, lam, beta, n, d)
        rows.append(("rdp", decreasing, utility_bound_rdp_decreasing(alpha, epsilon, L, lam, n, d)))
    if delta is not None:
        fixed = calibrate_dp(epsilon, delta, L, lam, beta, n, d)
        rows.append(("dp", fixed, utility_bound_dp(epsilon, delta, L, lam, beta, n, d, xi2)))
        decreasing = calibrate_dp_decreasing(epsilon, delta, L, lam, beta, n, d)
        rows.append(("dp", decreasing, utility_bound_dp_decreasing(epsilon, delta, L, lam, n, d)))
    return pd.DataFrame(
        [
            {
                "variant": f"{kind}-{calibration.schedule}",
                "alpha": calibration.alpha,
                "sigma2": calibration.sigma2,
                "iterations": calibration.iterations,
                "regime_ratio": calibration.regime_ratio,
                "utility_bound": bound,
            }
            for kind, calibration, bound in rows
        ]
    )


# --- verification suites ---------------------------------------------------------------------------------------

VERIFY_SUITES = ("accountant", "regimes", "privacy", "utility", "xi", "gradients", "calibration")


@dataclass
class SuiteResult:
    name: str
    passed: bool = True

    #: Name of the failed assertion, if any.
    assertion: t.Optional[str] = None
    message: str = ""
    details: t.List[t.Dict[str, t.Any]] = field(default_factory=list)

    def to_json(self) -> t.Dict[str, t.Any]:
        return dataclasses.asdict(self)


@dataclass
class VerifyReport:
    suites: t.List[SuiteResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(suite.passed for suite in self.suites)

    def to_json(self) -> t.Dict[str, t.Any]:
        return {
            "schema_version": SCHEMA_VERSION,
            "passed": self.passed,
            "suites": {suite.name: suite.to_json() for suite in self.suites},
        }


@dataclass
class _VerifyContext:
    seeds: int
    base_seed: int
    workers: t.Optional[int]
    quadratic: Dataset


def _expect(condition: bool, assertion: str, message: str) -> None:
    if not condition:
        raise VerificationError(assertion, message)


def _close(a: float, b: float, rtol: float) -> bool:
    return abs(a - b) <= rtol * max(abs(a), abs(b)) or a == b


def _suite_accountant(ctx: _VerifyContext) -> t.List[t.Dict[str, t.Any]]:
    p = PrivacyParams(alpha=4.0, L=2.0, lam=0.5, beta=2.0, n=200, sigma2=0.5)
    rng = np.random.default_rng(ctx.base_seed)
    cases: t.List[t.Tuple[StepSchedule, int]] = [(Constant(0.25), 2000), (Decreasing(p.beta, p.lam), 2000)]
    for _ in range(IDENTITY_SCHEDULES):
        steps = int(rng.integers(1, IDENTITY_MAX_STEPS + 1))
        cases.append((Explicit(tuple(rng.uniform(0.01, 0.99, steps) / p.beta)), steps))
    limit = asymptote(p)
    details: t.List[t.Dict[str, t.Any]] = []
    worst = 0.0
    for schedule, steps in cases:
        path = rdp_recursion_path(p, schedule, steps)
        previous = 0.0
        for K in sorted({0, 1, steps // 3, steps // 2, steps}):
            eps = rdp_general(p, schedule, K)
            recursion = float(path[K])
            _expect(_close(recursion, eps, 1e-9), "recursion_identity", f"K={K}: {recursion!r} != {eps!r}")
            if eps > 0:
                worst = max(worst, abs(recursion - eps) / eps)
            clsi = rdp_clsi(p.alpha, p.L, p.c, p.n, p.sigma2, schedule, K)
            _expect(_close(clsi, eps, 1e-12), "clsi_identity", f"K={K}: {clsi!r} != {eps!r}")
            _expect(0 <= eps <= limit, "bounded_by_asymptote", f"K={K}: {eps} > {limit}")
            _expect(eps >= previous, "monotone_in_k", f"K={K}: {eps} < {previous}")
            previous = eps
    details.append({"check": "recursion_identity", "schedules": len(cases), "max_relative_error": worst})
    # λ/2 · Σ η_k = 18.75
    saturated = rdp_general(p, Constant(0.25), 300)
    _expect(_close(saturated, limit, 1e-6), "asymptote_limit", f"{saturated} does not reach {limit}")
    for K in (0, 1, 7, 1000):
        closed_form = rdp_constant(p, 0.25, K)
        _expect(closed_form == rdp_general(p, Constant(0.25), K), "constant_identity", f"K={K}: not bitwise equal")
    decreasing = Decreasing(p.beta, p.lam)
    for K in (1, 10, 100, 10_000):
        shifted = Explicit(tuple(decreasing.etas(K + 1)[1:]))
        lower, closed, upper = rdp_general(p, shifted, K), rdp_decreasing(p, K), rdp_general(p, decreasing, K)
        _expect(lower <= closed <= upper, "decreasing_sandwich", f"K={K}: {lower} <= {closed} <= {upper} fails")
        details.append({"check": "decreasing_sandwich", "K": K, "ratio": upper / closed})
    # λK/(4β) = 0.01
    weak = PrivacyParams(alpha=4.0, L=2.0, lam=0.01, beta=2.0, n=200, sigma2=0.5)
    eta, K = 1 / (2 * weak.beta), 8
    ratio = rdp_constant(weak, eta, K) / composition_baseline(weak.alpha, weak.L, weak.n, weak.sigma2, eta, K)
    _expect(1.9 <= ratio <= 2.0, "small_k_baseline_ratio", f"ratio {ratio} outside [1.9, 2.0]")
    details.append({"check": "small_k_baseline_ratio", "K": K, "ratio": ratio})
    return details


def _suite_regimes(ctx: _VerifyContext) -> t.List[t.Dict[str, t.Any]]:
    details = []
    for lam, n, growth in ((0.01, 20, 4.0), (0.5, 100, 16.0)):
        small = calibrate_decreasing(1.0, 2.0, 1.0, lam, 1.0, n, 1)
        large = calibrate_decreasing(1.0, 2.0, 1.0, lam, 1.0, 2 * n, 1)
        observed = large.iterations / small.iterations
        _expect(abs(observed / growth - 1) < 0.01, "k_growth", f"doubling n grew K by {observed}, expected {growth}")
        _expect((small.regime_ratio < 1) == (growth == 4.0), "regime_ratio", f"ratio {small.regime_ratio}")
        details.append({"lam": lam, "n": n, "regime_ratio": small.regime_ratio, "growth": observed})
    return details


def _suite_privacy(ctx: _VerifyContext) -> t.List[t.Dict[str, t.Any]]:
    details = []
    for n, sigma2, eta in itertools.product((50, 100, 500), (0.25, 0.5, 1.0), (0.1, 0.4, 0.9)):
        report = privacy_oracle_check(n, eta, sigma2, 1000, (2.0, 4.0, 8.0))
        details.append(report.to_json())
    return details


def _quadratic_config(ctx: _VerifyContext, schedule: StepSchedule, K: int) -> TrainConfig:
    data = ctx.quadratic
    radius = default_radius(QuadraticModel(data.p).value(np.zeros(data.p), data.full()), 1.0)
    return TrainConfig(
        batch_size=min(10, data.n),
        iterations=K,
        sigma2=0.1,
        schedule=schedule,
        ball=L2Ball(max(radius, data.norm_bound)),
        seed=RunSeed(ctx.base_seed),
        mode="utility",
    )


def _suite_utility(ctx: _VerifyContext) -> t.List[t.Dict[str, t.Any]]:
    data = ctx.quadratic
    model = QuadraticModel(data.p)
    fixed = excess_risk_mc(_quadratic_config(ctx, Constant(0.25), 200), data, model, ctx.seeds, ctx.workers)
    average = avg_risk_mc(_quadratic_config(ctx, Decreasing(1.0, 1.0), 200), data, model, ctx.seeds, ctx.workers)
    return [fixed.to_json(), average.to_json()]


def _suite_xi(ctx: _VerifyContext) -> t.List[t.Dict[str, t.Any]]:
    rows = min(XI_ENUMERATION_ROWS, ctx.quadratic.n)
    small = Dataset(ctx.quadratic.features[:rows], ctx.quadratic.labels[:rows] % 2, ctx.quadratic.norm_bound, 2)
    rng = np.random.default_rng(ctx.base_seed)
    details = []
    models: t.List[Model] = [QuadraticModel(small.p), LogisticModel.for_dataset(small, 0.05)]
    for model in models:
        theta = rng.standard_normal(model.dimension()) * 0.5
        grads = model.example_grads(theta, small.full())
        for m in range(1, small.n + 1):
            batches = [grads[list(batch)].mean(axis=0) for batch in itertools.combinations(range(small.n), m)]
            exact = float(np.mean([g @ g for g in batches]))
            formula = xi_squared(model, small, theta, m)
            _expect(_close(formula, exact, 1e-12), "xi_enumeration", f"m={m}: {formula} != {exact}")
            details.append({"model": type(model).__name__, "m": m, "xi2": formula})
    return details


def _point_in_ball(rng: np.random.Generator, dim: int, radius: float) -> np.ndarray:
    direction = rng.standard_normal(dim)
    return t.cast(np.ndarray, direction * (radius * rng.uniform() ** (1 / dim) / np.linalg.norm(direction)))


def _finite_difference_error(model: Model, theta: np.ndarray, full: Batch) -> float:
    h = FINITE_DIFFERENCE_STEP
    grad = model.grad(theta, full)
    numeric = np.array(
        [
            (model.value(theta + h * e, full) - model.value(theta - h * e, full)) / (2 * h)
            for e in np.eye(model.dimension())
        ]
    )
    return float(np.linalg.norm(numeric - grad) / max(float(np.linalg.norm(grad)), 1e-8))


def _suite_gradients(ctx: _VerifyContext) -> t.List[t.Dict[str, t.Any]]:
    data, _ = make_blobs(50, 4, 3, 2.0, ctx.base_seed)
    rng = np.random.default_rng(ctx.base_seed)
    ball = L2Ball(2.0)
    details = []
    models: t.List[t.Tuple[Model, Dataset]] = [
        (LogisticModel.for_dataset(data, 0.01), data),
        (QuadraticModel(ctx.quadratic.p), ctx.quadratic),
    ]
    for model, dataset in models:
        name = type(model).__name__
        full = dataset.full()
        dim = model.dimension()
        c = model.constants(dataset, ball)

        worst = 0.0
        for _ in range(GRADIENT_POINTS):
            theta = _point_in_ball(rng, dim, ball.radius)
            worst = max(worst, _finite_difference_error(model, theta, full))
            spread = float(np.max(np.abs(model.example_grads(theta, full).mean(axis=0) - model.grad(theta, full))))
            _expect(spread <= 1e-12, "example_grads_mean", f"{name}: {spread}")
        _expect(worst <= 1e-5, "finite_differences", f"{name}: relative error {worst}")

        for _ in range(CERTIFICATE_PAIRS):
            a, b = _point_in_ball(rng, dim, ball.radius), _point_in_ball(rng, dim, ball.radius)
            fa, fb = model.value(a, full), model.value(b, full)
            gap = b - a
            linear = fa + float(model.grad(a, full) @ gap)
            slack = 1e-12 * max(1.0, abs(fa), abs(fb))
            square = float(gap @ gap)
            _expect(fb >= linear + c.lam / 2 * square - slack, "strong_convexity", f"{name}: lambda={c.lam}")
            _expect(fb <= linear + c.beta / 2 * square + slack, "smoothness", f"{name}: beta={c.beta}")
            largest = float(np.max(np.linalg.norm(model.example_grads(a, full), axis=1)))
            _expect(largest <= c.L * (1 + 1e-12), "lipschitz", f"{name}: gradient norm {largest} > L={c.L}")
        details.append({"model": name, "max_relative_error": worst, "certificate_pairs": CERTIFICATE_PAIRS})
    return details


def _suite_calibration(ctx: _VerifyContext) -> t.List[t.Dict[str, t.Any]]:
    L, lam, beta, n, d = 1.0, 0.01, 0.26, 10_000, 10
    details = []
    dp = calibrate_dp(1.0, 1e-5, L, lam, beta, n, d)
    params = PrivacyParams(dp.alpha, L, lam, beta, n, dp.sigma2, d)
    eps = to_dp(rdp_constant(params, 1 / (2 * beta), dp.iterations), dp.alpha, 1e-5)
    _expect(eps <= 1.0 * (1 + 1e-12), "dp_round_trip", f"calibrated run has epsilon {eps} > 1")
    details.append({"variant": "dp-constant", "epsilon": eps, **dataclasses.asdict(dp)})
    for alpha in (2.0, 8.0):
        rdp = calibrate_rdp(1.0, alpha, L, lam, beta, n, d)
        params = PrivacyParams(alpha, L, lam, beta, n, rdp.sigma2, d)
        eps = rdp_constant(params, 1 / (2 * beta), rdp.iterations)
        _expect(eps <= 1.0, "rdp_round_trip", f"alpha={alpha}: calibrated run has epsilon {eps} > 1")
        eps_decreasing = rdp_decreasing(params, calibrate_decreasing(1.0, alpha, L, lam, beta, n, d).iterations)
        _expect(eps_decreasing <= 1.0, "rdp_decreasing_round_trip", f"alpha={alpha}: {eps_decreasing} > 1")
        details.append({"variant": "rdp-constant", "epsilon": eps, **dataclasses.asdict(rdp)})
    return details


_SUITES: t.Dict[str, t.Callable[[_VerifyContext], t.List[t.Dict[str, t.Any]]]] = {
    "accountant": _suite_accountant,
    "regimes": _suite_regimes,
    "privacy": _suite_privacy,
    "utility": _suite_utility,
    "xi": _suite_xi,
    "gradients": _suite_gradients,
    "calibration": _suite_calibration,
}


def quadratic_fixture(n: int = 100, d: int = 1, seed: int = 0) -> Dataset:
    """Rows drawn uniformly from [−1, 1]^d, scaled into the unit ball."""

    rng = np.random.default_rng(seed)
    features = rng.uniform(-1.0, 1.0, (n, d)) / math.sqrt(d)
    return Dataset(features, np.zeros(n, dtype=np.int64), 1.0)


def cmd_verify(
    suites: t.Optional[t.Sequence[str]] = None,
    seeds: int = VERIFY_SEEDS,
    base_seed: int = 0,
    workers: t.Optional[int] = None,
    fixture: t.Optional[t.Union[str, Path]] = None,
) -> VerifyReport:
    """
    Run the selected verification suites (all of them by default). A failed assertion or an error inside a suite
    marks that suite as failed; the other suites still run.
    """

    selected = list(suites) if suites else list(VERIFY_SUITES)
    unknown = [name for name in selected if name not in _SUITES]
    if unknown:
        raise InvalidInputError(f"unknown verification suites: {', '.join(unknown)}")
    report = VerifyReport()
    try:
        quadratic = load_csv(fixture, 1.0).data if fixture is not None else quadratic_fixture(seed=base_seed)
    except DpsgldError as exc:
        for name in selected:
            report.suites.append(SuiteResult(name, False, "fixture", str(exc)))
        return report
    context = _VerifyContext(seeds, base_seed, workers, quadratic)
    for name in selected:
        result = SuiteResult(name)
        try:
            result.details = _SUITES[name](context)
        except VerificationError as exc:
            result.passed, result.assertion, result.message = False, exc.assertion, exc.message
        except DpsgldError as exc:
            result.passed, result.assertion, result.message = False, f"{name}:{type(exc).__name__}", str(exc)
        logger.info("suite %s: %s", name, "pass" if result.passed else f"FAIL ({result.assertion})")
        report.suites.append(result)
    return report


def cmd_bench(
    configs: t.Sequence[RunConfigFile],
    methods: t.Sequence[Method] = tuple(Method),
    seeds: int = 1,
    workers: t.Optional[int] = None,
) -> pd.DataFrame:
    """
    One row per (method, dataset, schedule): test accuracy (train accuracy without a test set) as mean and
    standard error over *seeds* runs with seeds `config.seed + i`. The ε column is empty for non-private runs.
    """

    if not configs:
        raise InvalidInputError("the benchmark needs at least one configuration")
    rows = []
    for config in configs:
        prepared = prepare(config)
        metric = "test_accuracy" if prepared.test is not None else "train_accuracy"
        for method in methods:

            def run(seed: int, method: Method = method) -> float:
                trajectory = train(
                    method, prepared.train_config(seed), prepared.train, prepared.model, config.clip_norm
                )
                return evaluate(prepared, trajectory.final)[metric]

            accuracy, stderr = mean_stderr(map_seeds(run, [config.seed + i for i in range(seeds)], workers))
            privacy = privacy_for(prepared, method)
            rows.append(
                {
                    "method": method.value,
                    "dataset": prepared.source,
                    "schedule": config.schedule.kind,
                    "epochs": prepared.iterations / iterations_for_epochs(prepared.train.n, config.batch_size, 1),
                    "epsilon": privacy.epsilon if privacy is not None else math.nan,
                    "delta": privacy.delta if privacy is not None else math.nan,
                    "alpha": privacy.alpha if privacy is not None else math.nan,
                    "accuracy": accuracy,
                    "accuracy_stderr": stderr,
                    "seeds": seeds,
                }
            )
            logger.info("bench %s/%s: accuracy %.4f +- %.4f", prepared.source, method.value, accuracy, stderr)
    return pd.DataFrame(rows)


def cmd_schema() -> t.Dict[str, t.Any]:
    return config_schema()
