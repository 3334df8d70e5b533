import math
from pathlib import Path

import numpy as np
import pytest

import dpsgld
from dpsgld import (
    Constant,
    Decreasing,
    Explicit,
    InvalidInputError,
    PreconditionError,
    PrivacyParams,
    alpha_grid,
    asymptote,
    calibrate_decreasing,
    calibrate_dp,
    calibrate_dp_decreasing,
    calibrate_rdp,
    closed_form_alpha,
    composition_baseline,
    composition_report,
    optimize_alpha,
    privacy_report,
    rdp_clsi,
    rdp_constant,
    rdp_decreasing,
    rdp_general,
    rdp_recursion,
    rdp_recursion_path,
    regime_ratio,
    to_dp,
)
from dpsgld._accountant import DEFAULT_ALPHAS

from .utils.caseparser import CaseData, cases_from

CASES_DIR = Path(__file__).parent / 'accountant_cases'
DEFAULT_RTOL = 1e-12

UNIT = PrivacyParams(alpha=2, L=1, lam=1, beta=1, n=100, sigma2=1)


def _namespace():
  namespace = {name: getattr(dpsgld, name) for name in dpsgld.__all__}
  namespace.update(np=np, math=math)
  return namespace


@cases_from(CASES_DIR)
def test_accountant_cases(case: CaseData):
  namespace = _namespace()
  func = namespace[case.operation]
  kwargs = {key: eval(expr, namespace) for key, expr in case.args.items()}
  rtol = float(case.options.get('rtol', DEFAULT_RTOL))

  if case.expects_error:
    with pytest.raises(getattr(dpsgld, case.expects)):
      func(**kwargs)
    return

  result = func(**kwargs)
  if '=' not in case.expects:
    assert np.isclose(result, float(case.expects), rtol=rtol, atol=0), f'{case.filename}: {case.name}: {result!r}'
    return
  for line in case.expects.splitlines():
    attribute, _, value = line.partition('=')
    actual = getattr(result, attribute.strip())
    assert np.isclose(actual, float(value), rtol=rtol, atol=0), f'{case.name}: {attribute.strip()} = {actual!r}'


@pytest.mark.parametrize('K', [0, 1, 5, 50, 1000])
def test_constant_form_is_the_general_form(K):
  assert rdp_constant(UNIT, 0.5, K) == rdp_general(UNIT, Constant(0.5), K)
  assert rdp_general(UNIT, Explicit((0.5,) * K), K) == pytest.approx(rdp_general(UNIT, Constant(0.5), K), rel=1e-12)


def test_bound_is_monotone_and_below_the_asymptote():
  values = [rdp_general(UNIT, Constant(0.5), K) for K in range(0, 2000, 7)]
  assert all(a <= b for a, b in zip(values, values[1:]))
  assert values[-1] <= asymptote(UNIT)
  assert values[-1] == pytest.approx(asymptote(UNIT), rel=1e-9)


def test_bound_is_linear_in_the_order():
  for alpha in (1.5, 3.0, 32.0):
    scaled = rdp_general(UNIT.with_alpha(alpha), Constant(0.5), 40)
    assert scaled == pytest.approx(rdp_general(UNIT, Constant(0.5), 40) * alpha / 2, rel=1e-12)


def test_bound_ignores_the_dimension():
  wide = PrivacyParams(alpha=2, L=1, lam=1, beta=1, n=100, sigma2=1, d=500)
  assert rdp_general(wide, Constant(0.5), 30) == rdp_general(UNIT, Constant(0.5), 30)


def test_decreasing_closed_form_is_sandwiched():
  p = PrivacyParams(alpha=2, L=1, lam=0.5, beta=2, n=50, sigma2=0.3)
  schedule = Decreasing(p.beta, p.lam)
  for K in (1, 2, 10, 100, 1000):
    shifted = Explicit(tuple(schedule.etas(K + 1)[1:]))
    assert rdp_general(p, shifted, K) <= rdp_decreasing(p, K) * (1 + 1e-12)
    assert rdp_decreasing(p, K) <= rdp_general(p, schedule, K) * (1 + 1e-12)


def test_clsi_form_reduces_to_the_general_form():
  p = PrivacyParams(alpha=3, L=2, lam=0.4, beta=1, n=20, sigma2=0.7)
  schedule = Constant(0.3)
  assert rdp_clsi(p.alpha, p.L, p.c, p.n, p.sigma2, schedule, 25) == pytest.approx(
      rdp_general(p, schedule, 25), rel=1e-12
  )


def test_clsi_rejects_nonpositive_constant():
  with pytest.raises(InvalidInputError):
    rdp_clsi(2, 1, 0, 10, 1, Constant(0.1), 5)


def test_recursion_matches_the_closed_form_for_a_constant_step():
  path = rdp_recursion_path(UNIT, Constant(0.25), 200)
  assert path[0] == 0
  assert np.all(np.diff(path) > 0)
  expected = [rdp_general(UNIT, Constant(0.25), K) for K in range(201)]
  np.testing.assert_allclose(path, expected, rtol=1e-10, atol=0)
  assert rdp_recursion(UNIT, Constant(0.25), 200) == path[-1]


def test_recursion_respects_the_step_cap():
  with pytest.raises(PreconditionError):
    rdp_recursion(UNIT, Constant(1.5), 3)


def test_alpha_grid_adds_the_balanced_order():
  grid = alpha_grid(1.0, 1e-5)
  assert grid == sorted(grid)
  assert closed_form_alpha(1.0, 1e-5) in grid
  assert set(DEFAULT_ALPHAS) <= set(grid)
  assert alpha_grid() == sorted(DEFAULT_ALPHAS)


def test_optimize_alpha_picks_the_minimum_of_the_grid():
  alpha, eps = optimize_alpha(UNIT, Constant(0.5), 100, 1e-5)
  brute = min(to_dp(rdp_general(UNIT.with_alpha(a), Constant(0.5), 100), a, 1e-5) for a in DEFAULT_ALPHAS)
  assert eps == brute
  assert alpha in DEFAULT_ALPHAS


def test_optimize_alpha_rejects_empty_grid():
  with pytest.raises(InvalidInputError):
    optimize_alpha(UNIT, Constant(0.5), 10, 1e-5, [])


def test_privacy_report():
  report = privacy_report(UNIT, Constant(0.5), 100, 1e-5, [2.0, 8.0, 32.0])
  assert [a for a, _ in report.curve] == [2.0, 8.0, 32.0]
  assert report.alpha == 32.0
  assert report.epsilon == pytest.approx(to_dp(dict(report.curve)[32.0], 32.0, 1e-5))
  assert report.asymptote == pytest.approx(4 * 32 / 1e4)
  assert report.baseline == pytest.approx(32 * 0.5 * 100 / 1e4)
  payload = report.to_json()
  assert payload['epsilon_rdp'] == dict(report.curve)[32.0]
  assert len(payload['curve']) == 3


def test_composition_report_has_no_asymptote():
  report = composition_report(1.0, 100, 1.0, Constant(0.5), 100, 1e-5, [2.0, 4.0])
  assert report.asymptote is None
  assert report.curve == [(2.0, pytest.approx(1e-2)), (4.0, pytest.approx(2e-2))]


def test_calibrated_run_meets_its_target():
  calibration = calibrate_rdp(1.0, 4.0, 1.0, 0.5, 1.0, 1000, 3)
  p = PrivacyParams(4.0, 1.0, 0.5, 1.0, 1000, calibration.sigma2, 3)
  schedule = calibration.make_schedule(0.5, 1.0)
  assert schedule == Constant(0.5)
  assert rdp_general(p, Constant(0.49999999), calibration.iterations) <= 1.0


def test_dp_calibration_meets_its_target():
  calibration = calibrate_dp(1.0, 1e-5, 1.0, 1.0, 1.0, 100, 1)
  p = PrivacyParams(calibration.alpha, 1.0, 1.0, 1.0, 100, calibration.sigma2)
  eps = to_dp(rdp_general(p, Constant(0.5), calibration.iterations), calibration.alpha, 1e-5)
  assert eps <= 1.0 + 1e-12


def test_decreasing_dp_calibration_makes_a_decreasing_schedule():
  calibration = calibrate_dp_decreasing(1.0, 1e-5, 1.0, 1.0, 2.0, 100, 1)
  assert calibration.schedule == 'decreasing'
  assert calibration.make_schedule(1.0, 2.0) == Decreasing(2.0, 1.0)
  assert calibration.iterations > 0


def test_dp_calibrations_report_the_regime_of_their_own_ratio():
  # ε²n²/(4 log(1/δ) d) = 16 = (β/λ)², while εn²/(αd) = 64/3.
  delta = math.exp(-1)
  assert calibrate_dp_decreasing(1.0, delta, 1.0, 0.5, 2.0, 8, 1).regime_ratio == pytest.approx(1.0)
  assert calibrate_dp(1.0, delta, 1.0, 0.5, 2.0, 8, 1).regime_ratio == pytest.approx(1.0)
  assert regime_ratio(1.0, 3.0, 0.5, 2.0, 8, 1) == pytest.approx(4 / 3)


def test_decreasing_bound_and_clsi_regimes():
  # λK = 4β puts the decreasing bound at half its asymptote.
  assert rdp_decreasing(UNIT, 4) == pytest.approx(asymptote(UNIT) / 2)
  assert rdp_general(UNIT, Constant(0.25), 10**6) == pytest.approx(asymptote(UNIT), rel=1e-12)
  assert rdp_clsi(2, 1, 1.0, 100, 1, Constant(0.25), 10) < rdp_clsi(2, 1, 0.5, 100, 1, Constant(0.25), 10)
  assert rdp_clsi(2, 1, 0.5, 100, 1, Constant(0.25), 0) == 0


def test_small_k_regime_is_twice_the_composition_baseline():
  p = PrivacyParams(alpha=4, L=2, lam=0.01, beta=2, n=200, sigma2=0.5)
  eta, K = 1 / (2 * p.beta), 8
  value = rdp_constant(p, eta, K)
  assert 1.9 <= value / composition_baseline(p.alpha, p.L, p.n, p.sigma2, eta, K) <= 2.0
  assert value == pytest.approx(p.alpha * p.L**2 * K / (p.beta * p.n**2 * p.sigma2), rel=0.05)


def test_optimize_alpha_on_single_and_balanced_grids():
  expected = to_dp(rdp_general(UNIT.with_alpha(3.0), Constant(0.5), 10), 3.0, 1e-5)
  assert optimize_alpha(UNIT, Constant(0.5), 10, 1e-5, [3.0]) == (3.0, expected)
  balanced = closed_form_alpha(1.0, 1e-5)
  _, best = optimize_alpha(UNIT, Constant(0.5), 100, 1e-5, alpha_grid(1.0, 1e-5))
  assert best <= to_dp(rdp_general(UNIT.with_alpha(balanced), Constant(0.5), 100), balanced, 1e-5)


def test_bound_is_monotone_in_the_parameters():
  base = rdp_general(UNIT, Constant(0.5), 50)
  assert rdp_general(UNIT.with_alpha(3), Constant(0.5), 50) > base
  assert rdp_general(PrivacyParams(2, 1, 1, 1, 200, 1), Constant(0.5), 50) < base
  assert rdp_general(PrivacyParams(2, 1, 1, 1, 100, 2), Constant(0.5), 50) < base


def test_decreasing_calibration_branches_meet_at_the_crossover():
  # r = εn²/(αd) = 16 and (β/λ)² = r, so both branches give K = 64.
  calibration = calibrate_decreasing(2.0, 2.0, 1.0, 0.5, 2.0, 4, 1)
  assert calibration.iterations == 64
  assert calibration.sigma2 == pytest.approx(0.5)
