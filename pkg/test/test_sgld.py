import math

import numpy as np
import pytest

from dpsgld import (
    Constant,
    Dataset,
    InvalidInputError,
    L2Ball,
    LogisticModel,
    Method,
    NumericDivergenceError,
    PreconditionError,
    QuadraticModel,
    RunSeed,
    TrainConfig,
    dp_sgd_train,
    dp_sgld_train,
    sgd_train,
    train,
)
from dpsgld._sgld import iterations_for_epochs, sample_batch


def _quadratic_data(n=20, d=2, seed=0):
  rng = np.random.default_rng(seed)
  features = rng.uniform(-0.5, 0.5, (n, d))
  return Dataset(features, np.zeros(n, dtype=int), 1.0)


def _logistic_data(n=40, p=3, seed=4):
  rng = np.random.default_rng(seed)
  features = rng.standard_normal((n, p))
  features /= np.maximum(1.0, np.linalg.norm(features, axis=1))[:, None]
  return Dataset(features, rng.integers(0, 2, n), 1.0, 2)


def _config(**kwargs):
  defaults = dict(
      batch_size=20,
      iterations=30,
      sigma2=0.01,
      schedule=Constant(0.25),
      ball=L2Ball(3.0),
      seed=RunSeed(11),
  )
  defaults.update(kwargs)
  return TrainConfig(**defaults)


def test_full_batch_run_is_reconstructible_from_the_seed_streams():
  data = _quadratic_data()
  config = _config(snapshot_stride=1)
  trajectory = dp_sgld_train(config, data, QuadraticModel(2))

  _, init_rng, noise_rng = config.seed.streams()
  theta = init_rng.standard_normal(2) * math.sqrt(2 * config.sigma2 / 1.0)
  mean = data.features.mean(axis=0)
  expected = [theta.copy()]
  for _ in range(config.iterations):
    theta = theta - 0.25 * (theta - mean) + math.sqrt(2 * 0.25 * config.sigma2) * noise_rng.standard_normal(2)
    expected.append(theta.copy())

  assert [k for k, _ in trajectory.snapshots] == list(range(config.iterations + 1))
  np.testing.assert_allclose(np.array([s for _, s in trajectory.snapshots]), np.array(expected), rtol=1e-12, atol=1e-14)
  np.testing.assert_array_equal(trajectory.final, trajectory.snapshots[-1][1])
  assert trajectory.method is Method.SGLD
  assert trajectory.seed == 11


def test_same_seed_same_trajectory():
  data = _quadratic_data()
  config = _config(batch_size=5)
  first = dp_sgld_train(config, data, QuadraticModel(2))
  second = dp_sgld_train(config, data, QuadraticModel(2))
  np.testing.assert_array_equal(first.final, second.final)
  other = dp_sgld_train(config.replace(seed=RunSeed(12)), data, QuadraticModel(2))
  assert not np.array_equal(first.final, other.final)


def test_iterates_stay_in_the_ball():
  data = _quadratic_data()
  config = _config(sigma2=5.0, ball=L2Ball(0.2), snapshot_stride=1, batch_size=4)
  trajectory = dp_sgld_train(config, data, QuadraticModel(2))
  for _, theta in trajectory.snapshots:
    assert np.linalg.norm(theta) <= 0.2 * (1 + 1e-12)


def test_snapshot_stride_records_the_final_iterate():
  data = _quadratic_data()
  trajectory = dp_sgld_train(_config(iterations=10, snapshot_stride=4, record_loss=True), data, QuadraticModel(2))
  assert [k for k, _ in trajectory.snapshots] == [0, 4, 8, 10]
  assert [k for k, _ in trajectory.losses] == [0, 4, 8, 10]
  assert all(value >= 0 for _, value in trajectory.losses)


def test_zero_iterations_release_the_initial_point():
  data = _quadratic_data()
  trajectory = dp_sgld_train(_config(iterations=0), data, QuadraticModel(2))
  _, init_rng, _ = RunSeed(11).streams()
  np.testing.assert_allclose(trajectory.final, init_rng.standard_normal(2) * math.sqrt(0.02))


def test_step_cap_is_enforced():
  data = _quadratic_data()
  with pytest.raises(PreconditionError):
    dp_sgld_train(_config(schedule=Constant(1.0)), data, QuadraticModel(2))
  with pytest.raises(PreconditionError):
    dp_sgld_train(_config(schedule=Constant(0.75), mode='utility'), data, QuadraticModel(2))


def test_divergence_is_reported():
  data = _quadratic_data()
  config = _config(projected=False, sigma2=0.0, schedule=Constant(0.9), ball=L2Ball(1e-9))
  with pytest.raises(NumericDivergenceError) as excinfo:
    dp_sgld_train(config.replace(iterations=5), data, QuadraticModel(2))
  assert excinfo.value.iteration == 0
  assert 'diverged at iteration 0' in str(excinfo.value)


def test_batch_size_above_n_is_rejected():
  with pytest.raises(InvalidInputError):
    dp_sgld_train(_config(batch_size=21), _quadratic_data(), QuadraticModel(2))


def test_sample_batch_has_no_duplicates():
  rng = np.random.default_rng(0)
  indices = sample_batch(10, 10, rng)
  assert sorted(indices) == list(range(10))
  with pytest.raises(InvalidInputError):
    sample_batch(10, 0, rng)


def test_sgd_starts_at_zero_without_noise():
  data = _quadratic_data()
  trajectory = sgd_train(_config(iterations=200, schedule=Constant(0.5)), data, QuadraticModel(2))
  assert trajectory.method is Method.SGD
  np.testing.assert_allclose(trajectory.final, data.features.mean(axis=0), atol=1e-10)


def test_dp_sgd_clips_per_example_gradients():
  rng = np.random.default_rng(4)
  features = rng.standard_normal((30, 3))
  features /= np.linalg.norm(features, axis=1)[:, None]
  data = Dataset(features, rng.integers(0, 2, 30), 1.0, 2)
  model = LogisticModel.for_dataset(data, 0.01)
  config = _config(batch_size=30, iterations=1, sigma2=0.0, schedule=Constant(1.0), ball=L2Ball(100.0))
  trajectory = dp_sgd_train(config, data, model, clip_norm=1e-3)
  # One clipped step from θ₀ = 0 moves at most the clip norm.
  assert np.linalg.norm(trajectory.final) <= 1e-3 * (1 + 1e-12)
  assert trajectory.method is Method.SGD_DP
  with pytest.raises(InvalidInputError):
    dp_sgd_train(config, data, model, clip_norm=0.0)


def test_train_dispatches_on_method():
  data = _quadratic_data()
  for method in Method:
    assert train(method, _config(iterations=3), data, QuadraticModel(2), clip_norm=1.0).method is method


def test_iterations_for_epochs():
  assert iterations_for_epochs(100, 30, 2) == 8
  assert iterations_for_epochs(100, 100, 3) == 3


def test_sample_batch_draws_rows_uniformly():
  rng = np.random.default_rng(21)
  draws = 100_000
  counts = np.bincount([sample_batch(10, 1, rng)[0] for _ in range(draws)], minlength=10)
  assert counts.sum() == draws
  assert np.all(np.abs(counts - draws / 10) <= 4 * math.sqrt(draws * 0.1 * 0.9))


def test_injected_noise_is_the_noise_stream_scaled():
  # Same seed with and without noise: the difference obeys D_{k+1} = (1 - η) D_k + sqrt(2ησ²) z_k.
  data = _quadratic_data()
  config = _config(iterations=10, sigma2=0.3, ball=L2Ball(100.0), projected=False, snapshot_stride=1)
  noisy = dp_sgld_train(config, data, QuadraticModel(2))
  quiet = dp_sgld_train(config.replace(sigma2=0.0), data, QuadraticModel(2))
  differences = [a - b for (_, a), (_, b) in zip(noisy.snapshots, quiet.snapshots)]

  noise_rng = config.seed.streams()[2]
  scale = math.sqrt(2 * 0.25 * 0.3)
  for k in range(config.iterations):
    expected = 0.75 * differences[k] + scale * noise_rng.standard_normal(2)
    np.testing.assert_allclose(differences[k + 1], expected, rtol=0, atol=1e-12)


def test_noiseless_full_batch_descent_is_monotone():
  quadratic = _quadratic_data()
  logistic = _logistic_data()
  for data, model in ((quadratic, QuadraticModel(2)), (logistic, LogisticModel.for_dataset(logistic, 0.05))):
    beta = model.constants(data, L2Ball(10.0)).beta
    config = _config(batch_size=data.n, iterations=50, sigma2=0.0, schedule=Constant(1 / (2 * beta)),
                     ball=L2Ball(10.0), snapshot_stride=1, record_loss=True)
    values = [value for _, value in dp_sgld_train(config, data, model).losses]
    assert len(values) == 51
    assert np.all(np.diff(values) <= 1e-12)
    assert values[-1] < values[0]


def test_dp_sgd_without_active_clipping_is_dp_sgld():
  data = _logistic_data()
  model = LogisticModel.for_dataset(data, 0.05)
  constants = model.constants(data, L2Ball(2.0))
  config = _config(batch_size=5, iterations=30, ball=L2Ball(2.0), schedule=Constant(1 / (2 * constants.beta)))
  clip_norm = 2 * constants.L
  clipped = dp_sgd_train(config, data, model, clip_norm)
  plain = dp_sgld_train(config, data, model)
  np.testing.assert_allclose(clipped.final, plain.final, rtol=1e-9, atol=1e-12)
