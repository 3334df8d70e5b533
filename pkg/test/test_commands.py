import json
import math
from pathlib import Path

import numpy as np
import pytest

from dpsgld import (
    ConfigurationError,
    Constant,
    Explicit,
    InvalidInputError,
    Method,
    PrivacyParams,
    alpha_grid,
    calibrate_dp,
    cmd_account,
    cmd_bench,
    cmd_calibrate,
    cmd_schema,
    cmd_train,
    cmd_verify,
    prepare,
    rdp_general,
    to_dp,
)
from dpsgld._commands import quadratic_fixture
from dpsgld._config import load_config_dict
from dpsgld._io import read_table

DATA_DIR = Path(__file__).parent / 'data'


def _blobs_config(**kwargs):
  payload = {
      'blobs': {'n': 100, 'p': 2, 'classes': 2, 'separation': 3.0, 'seed': 1},
      'sigma2': 0.01,
      'iterations': 20,
      'batch_size': 16,
  }
  payload.update(kwargs)
  return load_config_dict(payload)


def test_prepare_with_a_fixed_noise_level():
  prepared = prepare(_blobs_config())
  assert prepared.train.n == 80
  assert prepared.test is not None and prepared.test.n == 20
  assert prepared.sigma2 == 0.01
  assert prepared.iterations == 20
  assert prepared.schedule == Constant(1 / (2 * prepared.constants.beta))
  assert prepared.dimension == 4
  assert prepared.source == 'blobs'


def test_prepare_calibrates_from_a_target():
  prepared = prepare(_blobs_config(sigma2=None, iterations=None, target={'epsilon': 1.0, 'delta': 1e-5}))
  c = prepared.constants
  expected = calibrate_dp(1.0, 1e-5, c.L, c.lam, c.beta, 80, 4)
  assert prepared.sigma2 == expected.sigma2
  assert prepared.iterations == expected.iterations
  assert expected.alpha in prepared.alphas


def test_prepare_resolves_epochs():
  assert prepare(_blobs_config(iterations=None, epochs=2)).iterations == 10


def test_prepare_needs_an_iteration_count():
  with pytest.raises(ConfigurationError):
    prepare(_blobs_config(iterations=None))


def test_prepare_counts_rescaled_rows():
  config = load_config_dict({'dataset': str(DATA_DIR / 'small.csv'), 'loss': 'quadratic', 'sigma2': 0.1,
                             'iterations': 5, 'batch_size': 2})
  prepared = prepare(config)
  assert prepared.rescaled == 1
  assert prepared.source == 'small'
  assert prepared.test is None


def test_train_writes_its_report(tmp_path):
  bundle = cmd_train(_blobs_config(snapshot_stride=5))
  directory = bundle.write(tmp_path / 'run')
  report = json.loads((directory / 'report.json').read_text())
  assert report['schema_version'] == 1
  assert report['provenance']['method'] == 'sgld'
  assert len(report['provenance']['config_hash']) == 64
  assert report['constants']['iterations'] == 20
  assert 0 <= report['final']['test_accuracy'] <= 1
  assert report['privacy']['epsilon'] == bundle.privacy.epsilon

  metrics = read_table(directory / 'metrics.csv')
  assert metrics['iteration'].tolist() == [0, 5, 10, 15, 20]
  curve = read_table(directory / 'epsilon_curve.csv')
  assert curve['iterations'].tolist() == list(range(21))
  assert (np.diff(curve['epsilon_rdp']) >= 0).all()


def test_train_without_privacy(tmp_path):
  bundle = cmd_train(_blobs_config(method='sgd'))
  assert bundle.privacy is None
  assert bundle.epsilon_curve is None
  assert bundle.to_json()['privacy'] is None
  bundle.write(tmp_path)
  assert not (tmp_path / 'epsilon_curve.csv').exists()


def test_quadratic_run_has_no_accuracy():
  config = load_config_dict({'dataset': str(DATA_DIR / 'small.csv'), 'loss': 'quadratic', 'sigma2': 0.1,
                             'iterations': 5, 'batch_size': 2})
  final = cmd_train(config).to_json()['final']
  assert final['train_accuracy'] is None
  assert final['test_risk'] is None
  assert final['train_risk'] >= 0


def test_dp_sgd_uses_composition_accounting():
  bundle = cmd_train(_blobs_config(method='sgd-dp', clip_norm=0.5))
  assert bundle.privacy.asymptote is None
  assert bundle.epsilon_curve is None


def test_account_table():
  params = PrivacyParams(alpha=2, L=1, lam=1, beta=1, n=100, sigma2=1)
  table = cmd_account(params, Constant(0.5), [0, 10, 100], 1e-5)
  assert list(table.columns) == [
      'iterations', 'alpha', 'delta', 'epsilon_rdp', 'epsilon_closed', 'epsilon_dp', 'alpha_opt', 'epsilon_dp_opt',
      'baseline', 'asymptote'
  ]
  assert table['delta'].tolist() == [1e-5] * 3
  assert set(table['alpha_opt']) <= set(alpha_grid())
  for K, alpha_opt, eps_opt in zip(table['iterations'], table['alpha_opt'], table['epsilon_dp_opt']):
    assert eps_opt == to_dp(rdp_general(params.with_alpha(alpha_opt), Constant(0.5), K), alpha_opt, 1e-5)
  assert table['epsilon_rdp'].tolist() == table['epsilon_closed'].tolist()
  assert table['epsilon_rdp'].tolist()[2] == rdp_general(params, Constant(0.5), 100)
  assert (table['epsilon_dp_opt'] <= table['epsilon_dp']).all()
  assert table['baseline'].tolist() == pytest.approx([0.0, 1e-3, 1e-2])
  assert table['asymptote'].tolist() == pytest.approx([8e-4] * 3)


def test_account_table_for_an_explicit_schedule():
  params = PrivacyParams(alpha=2, L=1, lam=1, beta=1, n=100, sigma2=1)
  table = cmd_account(params, Explicit((0.1, 0.2, 0.3)), [1, 3], 1e-5, [2.0, 4.0])
  assert table['epsilon_closed'].isna().all()


def test_calibrate_table():
  table = cmd_calibrate(1.0, 1.0, 1.0, 1.0, 100, 1, delta=1e-5, alpha=2.0, xi2=0.1)
  assert table['variant'].tolist() == ['rdp-constant', 'rdp-decreasing', 'dp-constant', 'dp-decreasing']
  assert table['sigma2'].tolist()[0] == pytest.approx(8e-4)
  assert (table['iterations'] > 0).all()
  assert table['utility_bound'].tolist()[0] == pytest.approx(12 / 1e4 + 0.1 / 4)
  with pytest.raises(InvalidInputError):
    cmd_calibrate(1.0, 1.0, 1.0, 1.0, 100, 1)


def test_verify_fast_suites():
  report = cmd_verify(['accountant', 'regimes', 'calibration', 'xi', 'gradients'])
  assert report.passed, report.to_json()
  payload = report.to_json()
  assert set(payload['suites']) == {'accountant', 'regimes', 'calibration', 'xi', 'gradients'}

  identity = [d for d in payload['suites']['accountant']['details'] if d.get('check') == 'recursion_identity']
  assert identity[0]['schedules'] == 52
  assert identity[0]['max_relative_error'] <= 1e-9
  assert max(d['m'] for d in payload['suites']['xi']['details']) == 12
  gradients = payload['suites']['gradients']['details']
  assert [d['certificate_pairs'] for d in gradients] == [1000, 1000]
  assert all(d['max_relative_error'] <= 1e-5 for d in gradients)


def test_verify_oracle_suites():
  report = cmd_verify(['privacy', 'utility'], seeds=30, workers=2)
  assert report.passed, report.to_json()


def test_verify_reports_an_unreadable_fixture(tmp_path):
  report = cmd_verify(['utility', 'xi'], fixture=tmp_path / 'missing.csv')
  assert not report.passed
  assert [s.assertion for s in report.suites] == ['fixture', 'fixture']


def test_verify_rejects_unknown_suites():
  with pytest.raises(InvalidInputError):
    cmd_verify(['nope'])


def test_quadratic_fixture_is_bounded():
  data = quadratic_fixture(n=50, d=3)
  assert data.n == 50 and data.p == 3
  assert np.linalg.norm(data.features, axis=1).max() <= 1.0


def test_bench_rows():
  table = cmd_bench([_blobs_config()], list(Method), seeds=2, workers=1)
  assert table['method'].tolist() == ['sgld', 'sgd-dp', 'sgd']
  assert table['seeds'].tolist() == [2, 2, 2]
  assert math.isnan(table['epsilon'].tolist()[2])
  assert not math.isnan(table['epsilon'].tolist()[0])
  assert ((table['accuracy'] >= 0) & (table['accuracy'] <= 1)).all()


def test_bench_reports_passes_over_the_data():
  # 80 training rows in batches of 20: four iterations per pass.
  table = cmd_bench([_blobs_config(batch_size=20, iterations=8)], [Method.SGLD])
  assert table['epochs'].tolist() == [2.0]
  table = cmd_bench([_blobs_config(batch_size=30, iterations=8)], [Method.SGLD])
  assert table['epochs'].tolist() == pytest.approx([8 / 3])


@pytest.mark.slow
def test_bench_on_blobs_at_a_unit_budget():
  config = load_config_dict({'blobs': {'n': 2500, 'p': 10, 'classes': 2, 'seed': 0},
                             'target': {'epsilon': 1.0, 'delta': 1e-5}})
  majority = prepare(config).test.majority_rate()
  table = cmd_bench([config], list(Method), seeds=10).set_index('method')

  assert table.loc['sgld', 'epsilon'] <= 1.0
  assert table.loc['sgld', 'accuracy'] >= majority + 0.15
  for method in ('sgld', 'sgd-dp'):
    assert table.loc['sgd', 'accuracy'] >= table.loc[method, 'accuracy'] - 2 * table.loc[method, 'accuracy_stderr']

  bundle = cmd_train(config)
  assert bundle.privacy.epsilon <= 1.0
  assert bundle.to_json()['final']['test_accuracy'] >= majority + 0.15


def test_schema():
  assert 'properties' in cmd_schema()


def test_train_is_reproducible_from_the_seed():
  first = cmd_train(_blobs_config(seed=7)).to_json()
  second = cmd_train(_blobs_config(seed=7)).to_json()
  assert first['final'] == second['final']
  assert first['privacy'] == second['privacy']


def test_account_table_approaches_the_asymptote():
  params = PrivacyParams(alpha=2, L=1, lam=1, beta=1, n=100, sigma2=1)
  table = cmd_account(params, Constant(0.5), [1, 10, 100], 1e-5)
  assert table['epsilon_rdp'].tolist()[-1] == pytest.approx(8e-4, rel=1e-9)
  assert (table['epsilon_rdp'] < table['asymptote']).all()
