"""
The optimisers: DP-SGLD (noisy projected SGD), the clipped-gradient DP-SGD baseline and non-private SGD. Every
trainer produces a reproducible #Trajectory.
"""

import dataclasses
import enum
import logging
import math
import typing as t
from dataclasses import dataclass, field

import numpy as np

from ._errors import InvalidInputError, NumericDivergenceError
from ._losses import LossModel
from ._types import Dataset, L2Ball, RunSeed, StepSchedule, check_schedule, project

logger = logging.getLogger(__name__)

#: Trainers abort when an iterate exceeds this multiple of the ball radius before projection.
DIVERGENCE_FACTOR = 1e6


class Method(enum.Enum):
    SGLD = "sgld"
    SGD_DP = "sgd-dp"
    SGD = "sgd"


@dataclass(frozen=True)
class TrainConfig:
    """Parameters of a single training run."""

    #: Batch size *m*.
    batch_size: int

    #: Number of iterations *K*.
    iterations: int

    #: Noise variance σ². Zero turns the DP trainers into plain projected SGD (with a warning).
    sigma2: float

    schedule: StepSchedule
    ball: L2Ball
    seed: RunSeed

    #: Which step-size cap the schedule must satisfy: `privacy` (η_k < 1/β) or `utility` (η_k ≤ 1/(2β)).
    mode: str = "privacy"

    #: Record θ_k every *snapshot_stride* iterations (and at k = 0 and k = K). Zero disables snapshots.
    snapshot_stride: int = 0

    #: Evaluate the full empirical loss at every snapshot.
    record_loss: bool = False

    #: Project the iterates onto the ball. Unprojected runs fall outside of the privacy theorem; the moment oracle
    #: uses them to model the linear-Gaussian process.
    projected: bool = True

    def __post_init__(self) -> None:
        if self.batch_size < 1:
            raise InvalidInputError(f"batch size must be >= 1, got {self.batch_size}")
        if self.iterations < 0:
            raise InvalidInputError(f"iteration count must be >= 0, got {self.iterations}")
        if not (math.isfinite(self.sigma2) and self.sigma2 >= 0):
            raise InvalidInputError(f"noise variance must be finite and >= 0, got {self.sigma2}")
        if self.snapshot_stride < 0:
            raise InvalidInputError(f"snapshot stride must be >= 0, got {self.snapshot_stride}")
        if self.mode not in ("privacy", "utility"):
            raise InvalidInputError(f"unknown mode {self.mode!r}")

    def replace(self, **changes: t.Any) -> "TrainConfig":
        return dataclasses.replace(self, **changes)


def iterations_for_epochs(n: int, batch_size: int, epochs: int) -> int:
    """One epoch is ⌈n/m⌉ iterations."""

    return epochs * -(-n // batch_size)


@dataclass
class Trajectory:
    """The outcome of a training run. Only #final is covered by the privacy accountant."""

    method: Method

    #: The released parameter θ_K.
    final: np.ndarray

    #: Recorded `(k, θ_k)` pairs, see #TrainConfig.snapshot_stride.
    snapshots: t.List[t.Tuple[int, np.ndarray]] = field(default_factory=list)

    #: Recorded `(k, L_D(θ_k))` pairs, see #TrainConfig.record_loss.
    losses: t.List[t.Tuple[int, float]] = field(default_factory=list)

    #: The seed the run consumed.
    seed: int = 0

    iterations: int = 0


def init_theta(sigma2: float, lam: float, ball: L2Ball, rng: np.random.Generator, dim: int) -> np.ndarray:
    """Draw θ₀ ~ Π_C(N(0, (2σ²/λ) I_d))."""

    if not (sigma2 >= 0 and lam > 0):
        raise InvalidInputError(f"need sigma2 >= 0 and lambda > 0, got {sigma2}, {lam}")
    return project(rng.standard_normal(dim) * math.sqrt(2 * sigma2 / lam), ball)


def sample_batch(n: int, m: int, rng: np.random.Generator) -> np.ndarray:
    """A uniformly random subset of `range(n)` of size *m*, without duplicates."""

    if not 1 <= m <= n:
        raise InvalidInputError(f"batch size must lie in [1, {n}], got {m}")
    return rng.choice(n, size=m, replace=False)


def _clip_rows(grads: np.ndarray, clip_norm: float) -> np.ndarray:
    norms = np.linalg.norm(grads, axis=1)
    scale = np.minimum(1.0, clip_norm / np.maximum(norms, np.finfo(np.float64).tiny))
    return t.cast(np.ndarray, grads * scale[:, None])


def _run(
    method: Method,
    config: TrainConfig,
    data: Dataset,
    loss: LossModel,
    lam: float,
    clip_norm: t.Optional[float] = None,
) -> Trajectory:
    if config.batch_size > data.n:
        raise InvalidInputError(f"batch size {config.batch_size} exceeds dataset size {data.n}")

    K = config.iterations
    dim = loss.dimension()
    etas = config.schedule.etas(K)
    radius = config.ball.radius
    batch_rng, init_rng, noise_rng = config.seed.streams()

    if method is Method.SGD:
        theta = np.zeros(dim)
    else:
        theta = init_theta(config.sigma2, lam, config.ball, init_rng, dim)

    logger.info(
        "training %s: n=%d m=%d K=%d sigma2=%.6g R=%.6g seed=%d",
        method.value,
        data.n,
        config.batch_size,
        K,
        config.sigma2,
        radius,
        config.seed.seed,
    )

    trajectory = Trajectory(method, theta, seed=config.seed.seed, iterations=K)

    def record(k: int) -> None:
        trajectory.snapshots.append((k, theta.copy()))
        if config.record_loss:
            value = loss.value(theta, data.full())
            trajectory.losses.append((k, value))
            logger.debug("k=%d loss=%.12g |theta|=%.6g", k, value, np.linalg.norm(theta))

    stride = config.snapshot_stride
    if stride:
        record(0)

    for k in range(K):
        batch = data.take(sample_batch(data.n, config.batch_size, batch_rng))
        if clip_norm is None:
            grad = loss.grad(theta, batch)
        else:
            grad = _clip_rows(loss.example_grads(theta, batch), clip_norm).mean(axis=0)
        eta = float(etas[k])
        z = noise_rng.standard_normal(dim)
        step = theta - eta * grad + math.sqrt(2 * eta * config.sigma2) * z
        norm = float(np.linalg.norm(step))
        if not math.isfinite(norm) or norm > DIVERGENCE_FACTOR * radius:
            raise NumericDivergenceError(k, norm, radius)
        theta = project(step, config.ball) if config.projected else step
        if stride and ((k + 1) % stride == 0 or k + 1 == K):
            record(k + 1)

    trajectory.final = theta
    return trajectory


def dp_sgld_train(config: TrainConfig, data: Dataset, loss: LossModel) -> Trajectory:
    """
    Run DP-SGLD for `config.iterations` steps: sample a batch, take the mean gradient at θ_k, add Gaussian noise
    with per-coordinate variance 2η_kσ² and project onto the ball. Full-batch runs (m = n) are the full-gradient
    specialisation; there is no separate code path.

    @raises PreconditionError: If the schedule violates the cap of `config.mode`.
    @raises NumericDivergenceError: If an iterate becomes non-finite or explodes before projection.
    """

    if config.sigma2 == 0:
        logger.warning("DP-SGLD run with sigma2 = 0 carries no privacy guarantee")
    constants = loss.constants(data, config.ball)
    check_schedule(config.schedule, config.iterations, constants.beta, config.mode)
    return _run(Method.SGLD, config, data, loss, constants.lam)


def dp_sgd_train(config: TrainConfig, data: Dataset, loss: LossModel, clip_norm: float) -> Trajectory:
    """
    The DP-SGD baseline: per-example gradients are clipped to *clip_norm* before averaging; noise and (optional)
    projection follow #dp_sgld_train.
    """

    if not (math.isfinite(clip_norm) and clip_norm > 0):
        raise InvalidInputError(f"clip norm must be positive, got {clip_norm}")
    if config.sigma2 == 0:
        logger.warning("DP-SGD run with sigma2 = 0 carries no privacy guarantee")
    constants = loss.constants(data, config.ball)
    return _run(Method.SGD_DP, config, data, loss, constants.lam, clip_norm)


def sgd_train(config: TrainConfig, data: Dataset, loss: LossModel) -> Trajectory:
    """Non-private projected SGD: DP-SGLD with σ² = 0 started from θ₀ = 0."""

    return _run(Method.SGD, config.replace(sigma2=0.0), data, loss, lam=1.0)


def train(method: Method, config: TrainConfig, data: Dataset, loss: LossModel, clip_norm: float) -> Trajectory:
    if method is Method.SGLD:
        return dp_sgld_train(config, data, loss)
    if method is Method.SGD_DP:
        return dp_sgd_train(config, data, loss, clip_norm)
    return sgd_train(config, data, loss)
