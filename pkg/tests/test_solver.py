import itertools
import math

import numpy as np
import pytest

from rlqr.data import FitSpec, SurvivalSample
from rlqr.errors import EmptyRiskSet, MaxIterExceeded, Unidentifiable
from rlqr.estimating import SmoothingMatrix, l1_objective, u_smoothed
from rlqr.inference import estimate_covariance
from rlqr import solver
from rlqr.solver import Method, fit_iterative, fit_nonsmooth, fit_smoothed, newton_solve, prepare_context
from rlqr.simulation.scenario import generate_dataset


def _exhaustive_lad(x, y):
    """Minimum absolute deviation line, searched over every line through two data points."""
    best, best_loss = None, np.inf
    for i, j in itertools.combinations(range(len(x)), 2):
        if x[i] == x[j]:
            continue
        slope = (y[j] - y[i]) / (x[j] - x[i])
        intercept = y[i] - slope * x[i]
        loss = np.sum(np.abs(y - intercept - slope * x))
        if loss < best_loss - 1e-12:
            best, best_loss = np.array([intercept, slope]), loss
    return best


def test_fit_nonsmooth_matches_lad(lad_sample):
    report = fit_nonsmooth(FitSpec(), lad_sample)
    assert report.method is Method.NONSMOOTH_LP
    assert report.converged
    x = lad_sample.covariates[:, 0]
    np.testing.assert_allclose(report.beta_hat, _exhaustive_lad(x, np.log(lad_sample.time)), atol=1e-4)
    np.testing.assert_allclose(report.beta_hat, [0.1, 0.95], atol=1e-4)


def test_fit_nonsmooth_local_optimality(lad_sample):
    spec = FitSpec()
    ctx = prepare_context(spec, lad_sample)
    beta = fit_nonsmooth(spec, lad_sample, ctx=ctx).beta_hat
    best = l1_objective(beta, ctx, spec.big_m)
    for j in range(2):
        for delta in (-1e-6, 1e-6):
            moved = beta.copy()
            moved[j] += delta
            assert l1_objective(moved, ctx, spec.big_m) >= best - 1e-9


def test_fit_nonsmooth_general_tau(lad_sample):
    # Intercept-only check at tau = 0.3 against the weighted empirical quantile of log times
    sample = SurvivalSample.from_arrays(lad_sample.time, lad_sample.status)
    report = fit_nonsmooth(FitSpec(tau=0.3), sample)
    y = np.log(lad_sample.time)
    objective = [np.sum((y - b) * (0.3 - (y < b))) for b in y]
    assert report.beta_hat[0] == pytest.approx(y[int(np.argmin(objective))], abs=1e-6)


def test_fit_nonsmooth_duplicated_sample(generated_sample):
    spec = FitSpec(t0=1.0)
    once = fit_nonsmooth(spec, generated_sample)
    twice = fit_nonsmooth(spec, generated_sample.replicate(2))
    np.testing.assert_allclose(twice.beta_hat, once.beta_hat, atol=1e-8)


@pytest.mark.parametrize('scale', [0.1, 2.5, 40.0])
def test_fit_nonsmooth_covariate_scaling(generated_sample, scale):
    spec = FitSpec(t0=1.0)
    scaled = SurvivalSample.from_arrays(generated_sample.time, generated_sample.status,
                                        generated_sample.covariates * scale, covariate_names=('x',))
    base = fit_nonsmooth(spec, generated_sample).beta_hat
    rescaled = fit_nonsmooth(spec, scaled).beta_hat
    np.testing.assert_allclose(rescaled * [1.0, scale], base, atol=1e-8)


def test_newton_never_damped_on_weibull_designs(scenario_30):
    for replicate in range(4):
        sample = generate_dataset(scenario_30, replicate)
        for t0 in scenario_30.t0_list:
            report = fit_smoothed(FitSpec(t0=t0), sample)
            assert report.converged
            assert report.damped_steps == 0


def test_fit_smoothed_symmetric_median():
    sample = SurvivalSample.from_arrays(np.exp([-1.0, 0.0, 1.0]), [1, 1, 1])
    report = fit_smoothed(FitSpec(), sample)
    assert report.converged
    assert report.method is Method.SMOOTHED_FIXED_H
    assert abs(report.beta_hat[0]) < 1e-8


def test_fit_smoothed_close_to_nonsmooth(generated_sample):
    spec = FitSpec()
    nonsmooth = fit_nonsmooth(spec, generated_sample)
    smoothed = fit_smoothed(spec, generated_sample, init=nonsmooth.beta_hat)
    assert np.all(np.abs(smoothed.beta_hat - nonsmooth.beta_hat) <= 0.05)
    assert smoothed.final_score_norm < 1e-6


def test_fit_smoothed_root_independent_of_start(generated_sample):
    spec = FitSpec()
    warm = fit_smoothed(spec, generated_sample)
    cold = fit_smoothed(spec, generated_sample, init=warm.beta_hat + np.array([0.3, -0.3]))
    np.testing.assert_allclose(cold.beta_hat, warm.beta_hat, atol=1e-6)


def test_fit_smoothed_median_limit():
    # As H shrinks the intercept-only root approaches the sample median of the log times
    y = np.array([-0.8, -0.1, 0.35, 0.9, 1.6])
    sample = SurvivalSample.from_arrays(np.exp(y), np.ones(5, dtype=int))
    spec = FitSpec()
    ctx = prepare_context(spec, sample)
    half_gap = min(0.35 - (-0.1), 0.9 - 0.35) / 2
    beta = np.array([0.3])
    for factor in (1e-1, 1e-2, 1e-3):
        H = SmoothingMatrix.identity(1, 5).scaled(factor)
        beta = fit_smoothed(spec, sample, init=beta, smoothing=H, ctx=ctx).beta_hat
        assert abs(beta[0] - 0.35) < half_gap
    assert abs(beta[0] - 0.35) < 1e-3


def test_fit_smoothed_max_iter_carries_report(generated_sample):
    spec = FitSpec(max_iter=1, tol=1e-300)
    with pytest.raises(MaxIterExceeded) as exc:
        fit_smoothed(spec, generated_sample, init=np.array([1.9, 0.4]))
    assert exc.value.report.iterations == 1
    assert not exc.value.report.converged


def test_newton_residual_decreases(generated_sample):
    spec = FitSpec(t0=2.0)
    ctx = prepare_context(spec, generated_sample)
    H = SmoothingMatrix.identity(2, generated_sample.n)
    beta = np.array([1.0, 0.5])
    norm = np.linalg.norm(u_smoothed(beta, ctx, H))
    for _ in range(5):
        beta = newton_solve(ctx, H, beta, 1, 1e-300).beta_hat
        new_norm = np.linalg.norm(u_smoothed(beta, ctx, H))
        assert new_norm < norm or new_norm < 1e-12
        norm = new_norm


def test_unidentifiable_too_few_events(three_subjects):
    sample = SurvivalSample.from_arrays(three_subjects.time, three_subjects.status, [0.0, 1.0, 2.0])
    with pytest.raises(Unidentifiable):
        fit_nonsmooth(FitSpec(t0=2.5), sample)


def test_fit_nonsmooth_without_root_is_unidentifiable(rootless_sample, caplog):
    with pytest.raises(Unidentifiable, match='no root'):
        fit_nonsmooth(FitSpec(), rootless_sample)
    assert 'solving again' in caplog.text


def test_fit_nonsmooth_without_root_any_big_m(rootless_sample):
    for big_m in (1e3, 1e5):
        with pytest.raises(Unidentifiable):
            fit_nonsmooth(FitSpec(big_m=big_m), rootless_sample)


def test_empty_risk_set(three_subjects):
    with pytest.raises(EmptyRiskSet):
        fit_smoothed(FitSpec(t0=5.0), three_subjects)


def test_fit_iterative_converges(generated_sample):
    spec = FitSpec(resample_m=100, tol=1e-6)
    report, covariance = fit_iterative(spec, generated_sample)
    assert report.converged
    assert report.method is Method.SMOOTHED_ITERATIVE
    np.testing.assert_allclose(covariance.sigma, covariance.sigma.T)
    assert np.all(np.linalg.eigvalsh(covariance.sigma) > 0.0)
    fixed = fit_smoothed(spec, generated_sample)
    assert np.all(np.abs(report.beta_hat - fixed.beta_hat) < 0.05)


def test_fit_iterative_single_iteration(generated_sample):
    spec = FitSpec(resample_m=50, max_iter=1, tol=1e-300)
    ctx = prepare_context(spec, generated_sample)
    start = fit_nonsmooth(spec, generated_sample, ctx=ctx).beta_hat
    H = SmoothingMatrix.identity(2, generated_sample.n)
    one_step = newton_solve(ctx, H, start, 1, spec.tol)
    covariance = estimate_covariance(one_step.beta_hat, spec, generated_sample, H, ctx=ctx)

    with pytest.raises(MaxIterExceeded) as exc:
        fit_iterative(spec, generated_sample)
    np.testing.assert_allclose(exc.value.report.beta_hat, one_step.beta_hat, rtol=1e-12)
    np.testing.assert_allclose(exc.value.sigma, covariance.sigma, rtol=1e-12)


def test_kim_weighting_fits(generated_sample):
    report = fit_smoothed(FitSpec(weighting='kim'), generated_sample)
    assert report.converged
    assert report.beta_hat[0] == pytest.approx(math.log(5.0), abs=0.3)


def test_fit_iterative_from_given_start(generated_sample, monkeypatch):
    spec = FitSpec(resample_m=50, tol=1e-6)
    start = fit_nonsmooth(spec, generated_sample).beta_hat
    expected, _ = fit_iterative(spec, generated_sample)

    calls = []
    real_linprog = solver.linprog

    def counting_linprog(*args, **kwargs):
        calls.append(1)
        return real_linprog(*args, **kwargs)

    monkeypatch.setattr(solver, 'linprog', counting_linprog)
    report, _ = fit_iterative(spec, generated_sample, init=start)
    assert not calls
    np.testing.assert_allclose(report.beta_hat, expected.beta_hat, rtol=1e-12)
