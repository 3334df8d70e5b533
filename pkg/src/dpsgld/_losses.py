"""
Loss models with certified Lipschitz, strong-convexity and smoothness constants.

Two models are provided: L2-regularised multinomial logistic regression (the training workload) and the quadratic
mean-estimation loss ½‖θ − x‖² (the analytic oracle workload). Both operate on a flat parameter vector θ; the
logistic model reshapes it into a `(classes, p)` weight matrix.
"""

import logging
import math
import typing as t
from dataclasses import dataclass

import numpy as np
import typing_extensions as te
from scipy.special import logsumexp, softmax

from ._errors import InvalidInputError, NumericError
from ._types import Batch, Dataset, L2Ball

logger = logging.getLogger(__name__)

#: Power iteration settings for the largest eigenvalue of the Gram matrix.
POWER_ITERATION_TOL = 1e-9
POWER_ITERATION_MAX_STEPS = 10_000


@dataclass(frozen=True)
class LossConstants:
    """Certified constants of a loss over a projection ball."""

    #: Bound on ‖∇ℓ(θ, x)‖₂ for every θ in the ball and every row x.
    L: float

    #: Strong-convexity modulus.
    lam: float

    #: Smoothness modulus.
    beta: float

    def __post_init__(self) -> None:
        values = (self.L, self.lam, self.beta)
        if not all(math.isfinite(v) for v in values):
            raise InvalidInputError(f"loss constants must be finite, got L={self.L}, lam={self.lam}, beta={self.beta}")
        if not self.L > 0:
            raise InvalidInputError(f"Lipschitz constant must be positive, got {self.L}")
        if not 0 < self.lam <= self.beta:
            raise InvalidInputError(f"need 0 < lambda <= beta, got lambda={self.lam}, beta={self.beta}")

    @property
    def condition_number(self) -> float:
        return self.beta / self.lam


class LossModel(te.Protocol):
    """
    The interface the trainers and oracles use to evaluate a loss. Values and gradients are means over the rows of
    the batch.
    """

    def dimension(self) -> int:
        ...

    def value(self, theta: np.ndarray, batch: Batch) -> float:
        ...

    def grad(self, theta: np.ndarray, batch: Batch) -> np.ndarray:
        ...

    def example_grads(self, theta: np.ndarray, batch: Batch) -> np.ndarray:
        """Per-example gradients, shape `(batch.size, dimension())`."""

    def constants(self, data: Dataset, ball: L2Ball) -> LossConstants:
        ...


def _check_labels(batch: Batch, classes: int) -> None:
    if batch.size == 0:
        raise InvalidInputError("batch is empty")
    labels = batch.labels
    if labels.min() < 0 or labels.max() >= classes:
        raise InvalidInputError(f"labels must lie in [0, {classes}), got range [{labels.min()}, {labels.max()}]")


def _logits(W: np.ndarray, batch: Batch) -> np.ndarray:
    if W.ndim != 2 or W.shape[1] != batch.features.shape[1]:
        raise InvalidInputError(f"weight matrix of shape {W.shape} does not match {batch.features.shape[1]} features")
    return t.cast(np.ndarray, batch.features @ W.T)


def logistic_value(W: np.ndarray, batch: Batch, reg: float) -> float:
    """
    Mean cross-entropy −log softmax(Wx)_y over *batch* plus `reg * ‖W‖²`.
    """

    W = np.asarray(W, dtype=np.float64)
    _check_labels(batch, W.shape[0])
    logits = _logits(W, batch)
    rows = np.arange(batch.size)
    nll = logsumexp(logits, axis=1) - logits[rows, batch.labels]
    return float(np.mean(nll) + reg * np.sum(W * W))


def logistic_grad(W: np.ndarray, batch: Batch, reg: float) -> np.ndarray:
    """
    Mean of the per-example gradients `(softmax(Wx) − onehot(y)) xᵀ` plus `2 * reg * W`. Same shape as *W*.
    """

    W = np.asarray(W, dtype=np.float64)
    _check_labels(batch, W.shape[0])
    residual = softmax(_logits(W, batch), axis=1)
    residual[np.arange(batch.size), batch.labels] -= 1.0
    return t.cast(np.ndarray, residual.T @ batch.features / batch.size + 2 * reg * W)


def logistic_example_grads(W: np.ndarray, batch: Batch, reg: float) -> np.ndarray:
    """Per-example gradients of shape `(m, classes, p)`, regulariser included."""

    W = np.asarray(W, dtype=np.float64)
    _check_labels(batch, W.shape[0])
    residual = softmax(_logits(W, batch), axis=1)
    residual[np.arange(batch.size), batch.labels] -= 1.0
    return t.cast(np.ndarray, residual[:, :, None] * batch.features[:, None, :] + 2 * reg * W[None])


def gram_max_eigenvalue(features: np.ndarray) -> float:
    """
    Largest eigenvalue of `(1/n) Σ x_i x_iᵀ` by power iteration on the `p × p` Gram matrix.

    @raises NumericError: If the iteration does not settle within #POWER_ITERATION_MAX_STEPS steps.
    """

    n, p = features.shape
    gram = features.T @ features / n
    if not np.any(gram):
        return 0.0
    vector = np.random.default_rng(0).standard_normal(p)
    vector /= np.linalg.norm(vector)
    estimate = 0.0
    for step in range(POWER_ITERATION_MAX_STEPS):
        image = gram @ vector
        norm = float(np.linalg.norm(image))
        if norm == 0.0:
            # The start vector fell into the null space; restart along the largest diagonal entry.
            vector = np.zeros(p)
            vector[int(np.argmax(np.diag(gram)))] = 1.0
            continue
        rayleigh = float(vector @ image)
        vector = image / norm
        if abs(rayleigh - estimate) <= POWER_ITERATION_TOL * max(1.0, abs(rayleigh)):
            logger.debug("power iteration settled after %d steps at %.12g", step + 1, rayleigh)
            return rayleigh
        estimate = rayleigh
    raise NumericError(f"power iteration did not converge in {POWER_ITERATION_MAX_STEPS} steps")


def logistic_constants(data: Dataset, reg: float, ball: L2Ball) -> LossConstants:
    """
    Certified constants of `ℓ(W, x) = −log softmax(Wx)_y + reg‖W‖²` over *ball*:

    * λ = 2·reg (the Hessian of the regulariser),
    * β = ½·λ_max((1/n) Σ x_i x_iᵀ) + λ (the softmax Hessian block is bounded by ½ I),
    * L = √2·B + 2·reg·R (‖softmax − onehot‖₂ ≤ √2 and ‖W‖ ≤ R).
    """

    if not (math.isfinite(reg) and reg > 0):
        raise InvalidInputError(f"regularisation must be positive for strong convexity, got {reg}")
    lam = 2 * reg
    beta = 0.5 * gram_max_eigenvalue(data.features) + lam
    L = math.sqrt(2) * data.norm_bound + 2 * reg * ball.radius
    return LossConstants(L=L, lam=lam, beta=beta)


def default_radius(empirical_loss_at_zero: float, lam: float, L: t.Optional[float] = None) -> float:
    """
    Radius that contains the unconstrained regularised optimum: √(2·L_D(0)/λ), tightened by L/λ when a Lipschitz
    constant independent of the radius is available.
    """

    radius = math.sqrt(2 * empirical_loss_at_zero / lam)
    if L is not None:
        radius = min(radius, L / lam)
    return radius


@dataclass(frozen=True)
class LogisticModel:
    """Multinomial logistic regression with weights `W ∈ R^{classes × features}` flattened row-major into θ."""

    classes: int
    features: int
    reg: float

    def __post_init__(self) -> None:
        if self.classes < 2:
            raise InvalidInputError(f"logistic regression needs at least 2 classes, got {self.classes}")

    @classmethod
    def for_dataset(cls, data: Dataset, reg: float) -> "LogisticModel":
        return cls(data.classes, data.p, reg)

    def dimension(self) -> int:
        return self.classes * self.features

    def weights(self, theta: np.ndarray) -> np.ndarray:
        return np.asarray(theta, dtype=np.float64).reshape(self.classes, self.features)

    def value(self, theta: np.ndarray, batch: Batch) -> float:
        return logistic_value(self.weights(theta), batch, self.reg)

    def grad(self, theta: np.ndarray, batch: Batch) -> np.ndarray:
        return logistic_grad(self.weights(theta), batch, self.reg).ravel()

    def example_grads(self, theta: np.ndarray, batch: Batch) -> np.ndarray:
        return logistic_example_grads(self.weights(theta), batch, self.reg).reshape(batch.size, -1)

    def constants(self, data: Dataset, ball: L2Ball) -> LossConstants:
        return logistic_constants(data, self.reg, ball)

    def default_radius(self) -> float:
        """√(2·L_D(0)/λ) with L_D(0) = log(classes)."""

        return default_radius(math.log(self.classes), 2 * self.reg)

    def predict(self, theta: np.ndarray, features: np.ndarray) -> np.ndarray:
        return t.cast(np.ndarray, np.argmax(features @ self.weights(theta).T, axis=1))

    def accuracy(self, theta: np.ndarray, data: Dataset) -> float:
        return float(np.mean(self.predict(theta, data.features) == data.labels))


def _check_dimension(theta: np.ndarray, batch: Batch) -> None:
    if batch.size == 0:
        raise InvalidInputError("batch is empty")
    if theta.shape != (batch.features.shape[1],):
        raise InvalidInputError(f"parameter of shape {theta.shape} does not match {batch.features.shape[1]} features")


def quadratic_value(theta: np.ndarray, batch: Batch) -> float:
    """(1/m) Σ ½‖θ − x‖²."""

    theta = np.asarray(theta, dtype=np.float64)
    _check_dimension(theta, batch)
    diff = theta[None, :] - batch.features
    return float(0.5 * np.mean(np.sum(diff * diff, axis=1)))


def quadratic_grad(theta: np.ndarray, batch: Batch) -> np.ndarray:
    """θ − mean(batch)."""

    theta = np.asarray(theta, dtype=np.float64)
    _check_dimension(theta, batch)
    return t.cast(np.ndarray, theta - batch.features.mean(axis=0))


def quadratic_constants(data: Dataset, ball: L2Ball) -> LossConstants:
    """λ = β = 1 and L = R + B, the largest ‖θ − x‖ over the ball and the data domain."""

    return LossConstants(L=ball.radius + data.norm_bound, lam=1.0, beta=1.0)


@dataclass(frozen=True)
class QuadraticModel:
    """Mean estimation with ℓ(θ, x) = ½‖θ − x‖². Neighbouring datasets shift only the constant term of the gradient."""

    dim: int

    def dimension(self) -> int:
        return self.dim

    def value(self, theta: np.ndarray, batch: Batch) -> float:
        return quadratic_value(theta, batch)

    def grad(self, theta: np.ndarray, batch: Batch) -> np.ndarray:
        return quadratic_grad(theta, batch)

    def example_grads(self, theta: np.ndarray, batch: Batch) -> np.ndarray:
        theta = np.asarray(theta, dtype=np.float64)
        _check_dimension(theta, batch)
        return t.cast(np.ndarray, theta[None, :] - batch.features)

    def constants(self, data: Dataset, ball: L2Ball) -> LossConstants:
        return quadratic_constants(data, ball)
