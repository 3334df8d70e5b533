"""
Shared domain types: datasets, the projection ball, step-size schedules and the seeded randomness contract.
All types are immutable after construction.
"""

import abc
import math
import typing as t
from dataclasses import dataclass, field

import numpy as np

from ._errors import InvalidInputError, PreconditionError

#: Relative slack under which a point counts as lying inside a ball. Keeps #project() idempotent in floating point.
INSIDE_RTOL = 1e-12

#: Largest admissible #RunSeed value.
MAX_SEED = 2**64 - 1


@dataclass(frozen=True)
class Batch:
    """A set of rows drawn from a #Dataset. Unlike a dataset, a batch may hold a single row."""

    features: np.ndarray
    labels: np.ndarray

    @property
    def size(self) -> int:
        return int(self.features.shape[0])


@dataclass(frozen=True)
class Dataset:
    """
    An *n* × *p* feature matrix with integer labels and a certified bound *B* on the L2 norm of every row.
    The bound is verified on construction; enforcing it (by rescaling) is the job of the loaders.
    """

    #: Feature matrix of shape `(n, p)`, float64.
    features: np.ndarray

    #: Integer class ids in `[0, classes)`, shape `(n,)`.
    labels: np.ndarray

    #: Certified bound on the L2 norm of every row.
    norm_bound: float

    #: Number of classes. Ignored by the quadratic loss.
    classes: int = 2

    def __post_init__(self) -> None:
        features = np.asarray(self.features, dtype=np.float64)
        labels = np.asarray(self.labels)
        if features.ndim != 2:
            raise InvalidInputError(f"features must be a matrix, got shape {features.shape}")
        if labels.shape != (features.shape[0],):
            raise InvalidInputError(f"expected {features.shape[0]} labels, got shape {labels.shape}")
        if labels.size and not np.issubdtype(labels.dtype, np.integer):
            if not np.all(np.equal(np.mod(labels, 1), 0)):
                raise InvalidInputError("labels must be integral")
        labels = labels.astype(np.int64)
        if features.shape[0] < 2 or features.shape[1] < 1:
            raise InvalidInputError(f"dataset needs n >= 2 and p >= 1, got shape {features.shape}")
        if not np.all(np.isfinite(features)):
            raise InvalidInputError("features contain non-finite values")
        if not (math.isfinite(self.norm_bound) and self.norm_bound >= 0):
            raise InvalidInputError(f"norm bound must be finite and >= 0, got {self.norm_bound}")
        if self.classes < 1:
            raise InvalidInputError(f"class count must be positive, got {self.classes}")
        if labels.size and (labels.min() < 0 or labels.max() >= self.classes):
            raise InvalidInputError(f"labels must lie in [0, {self.classes})")
        norms = np.linalg.norm(features, axis=1)
        worst = int(np.argmax(norms))
        if norms[worst] > self.norm_bound * (1 + INSIDE_RTOL):
            raise InvalidInputError(f"row {worst} has norm {norms[worst]:.6g} > bound {self.norm_bound:.6g}")
        features.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return int(self.features.shape[0])

    @property
    def p(self) -> int:
        return int(self.features.shape[1])

    def take(self, indices: t.Sequence[int]) -> Batch:
        idx = np.asarray(indices, dtype=np.int64)
        return Batch(self.features[idx], self.labels[idx])

    def full(self) -> Batch:
        return Batch(self.features, self.labels)

    def majority_rate(self) -> float:
        """Fraction of rows carrying the most frequent label."""

        return float(np.bincount(self.labels, minlength=self.classes).max() / self.n)


@dataclass(frozen=True)
class L2Ball:
    """A closed L2 ball centred at the origin. This is the only convex set the package projects onto."""

    radius: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.radius) and self.radius > 0):
            raise InvalidInputError(f"ball radius must be finite and positive, got {self.radius}")

    def contains(self, point: np.ndarray) -> bool:
        return bool(np.linalg.norm(point) <= self.radius * (1 + INSIDE_RTOL))


def project(point: np.ndarray, ball: L2Ball) -> np.ndarray:
    """
    Orthogonal projection of *point* onto *ball*. Points inside the ball are returned unchanged, points outside
    are rescaled onto the sphere.

    @raises InvalidInputError: If *point* contains non-finite values.
    """

    point = np.asarray(point, dtype=np.float64)
    if not np.all(np.isfinite(point)):
        raise InvalidInputError("cannot project a non-finite point")
    norm = float(np.linalg.norm(point))
    if norm <= ball.radius * (1 + INSIDE_RTOL):
        return point.copy()
    return point * (ball.radius / norm)


class StepSchedule(abc.ABC):
    """
    Generator of step sizes η_k for k = 0, 1, 2, … The step η_k is used by the update producing θ_{k+1}.
    """

    @abc.abstractmethod
    def eta(self, k: int) -> float:
        ...

    @abc.abstractmethod
    def etas(self, count: int) -> np.ndarray:
        """The first *count* step sizes as an array."""

    def total(self, count: int) -> float:
        """Exact sum of the first *count* step sizes."""

        if count < 0:
            raise InvalidInputError(f"step count must be >= 0, got {count}")
        if count == 0:
            return 0.0
        return float(np.sum(self.etas(count)))

    def max_eta(self, count: int) -> float:
        return float(np.max(self.etas(count))) if count > 0 else 0.0


@dataclass(frozen=True)
class Constant(StepSchedule):
    value: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.value) and self.value > 0):
            raise InvalidInputError(f"step size must be positive, got {self.value}")

    def eta(self, k: int) -> float:
        _check_index(k)
        return self.value

    def etas(self, count: int) -> np.ndarray:
        return np.full(count, self.value)

    def total(self, count: int) -> float:
        if count < 0:
            raise InvalidInputError(f"step count must be >= 0, got {count}")
        return self.value * count


@dataclass(frozen=True)
class Decreasing(StepSchedule):
    """η_k = 1/(2β + λk/2)."""

    beta: float
    lam: float

    def __post_init__(self) -> None:
        if not (self.beta > 0 and self.lam > 0 and math.isfinite(self.beta) and math.isfinite(self.lam)):
            raise InvalidInputError(f"decreasing schedule needs beta, lambda > 0, got {self.beta}, {self.lam}")

    def eta(self, k: int) -> float:
        _check_index(k)
        return 1.0 / (2 * self.beta + self.lam * k / 2)

    def etas(self, count: int) -> np.ndarray:
        k = np.arange(count, dtype=np.float64)
        return 1.0 / (2 * self.beta + self.lam * k / 2)


@dataclass(frozen=True)
class Explicit(StepSchedule):
    values: t.Tuple[float, ...] = field(default=())

    def __post_init__(self) -> None:
        values = tuple(float(v) for v in self.values)
        if any(not (math.isfinite(v) and v > 0) for v in values):
            raise InvalidInputError("explicit step sizes must all be positive")
        object.__setattr__(self, "values", values)

    def eta(self, k: int) -> float:
        _check_index(k)
        if k >= len(self.values):
            raise InvalidInputError(f"explicit schedule has {len(self.values)} steps, asked for index {k}")
        return self.values[k]

    def etas(self, count: int) -> np.ndarray:
        if count > len(self.values):
            raise InvalidInputError(f"explicit schedule has {len(self.values)} steps, asked for {count}")
        return np.asarray(self.values[:count], dtype=np.float64)


def _check_index(k: int) -> None:
    if k < 0:
        raise InvalidInputError(f"iteration index must be >= 0, got {k}")


def schedule_eta(schedule: StepSchedule, k: int) -> float:
    """Step size η_k of *schedule*."""

    return schedule.eta(k)


def schedule_sum(schedule: StepSchedule, count: int) -> float:
    """Sum of the first *count* step sizes of *schedule* (0 for an empty sum)."""

    return schedule.total(count)


def check_schedule(schedule: StepSchedule, count: int, beta: float, mode: str) -> None:
    """
    Verify the step-size cap of *mode* over the first *count* steps: `privacy` requires η_k < 1/β,
    `utility` requires η_k ≤ 1/(2β).

    @raises PreconditionError: If the cap is violated.
    """

    if count == 0:
        return
    worst = schedule.max_eta(count)
    if mode == "privacy":
        if not worst < 1.0 / beta:
            raise PreconditionError(f"privacy bound requires eta_k < 1/beta = {1.0 / beta:.6g}, got {worst:.6g}")
    elif mode == "utility":
        if not worst <= 1.0 / (2 * beta) * (1 + INSIDE_RTOL):
            raise PreconditionError(f"utility bound requires eta_k <= 1/(2 beta) = {0.5 / beta:.6g}, got {worst:.6g}")
    else:
        raise InvalidInputError(f"unknown schedule mode {mode!r}")


@dataclass(frozen=True)
class RunSeed:
    """
    The seed of a run. The same seed and configuration always reproduce the same trajectory bit for bit.
    """

    seed: int

    def __post_init__(self) -> None:
        if not (0 <= self.seed <= MAX_SEED):
            raise InvalidInputError(f"seed must be an unsigned 64-bit integer, got {self.seed}")

    def streams(self) -> t.Tuple[np.random.Generator, np.random.Generator, np.random.Generator]:
        """
        Independent counter-based generators for batch sampling, initialisation and noise, in that order.
        Draws from one stream never shift the draws of another.
        """

        batch, init, noise = np.random.SeedSequence(self.seed).spawn(3)
        return (
            np.random.Generator(np.random.Philox(batch)),
            np.random.Generator(np.random.Philox(init)),
            np.random.Generator(np.random.Philox(noise)),
        )
