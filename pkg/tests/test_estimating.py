import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from rlqr.censoring import fit_censoring_km
from rlqr.data import SurvivalSample, Weighting
from rlqr.errors import BigMTooSmall, ZeroSmoothingScale
from rlqr.estimating import (ScoreContext, SmoothingMatrix, build_score_context, l1_objective, l1_pseudo_rows,
                             perturbed_context, slope_matrix, std_normal_cdf, std_normal_pdf, u_nonsmooth,
                             u_smoothed, u_smoothed_perturbed)


def test_normal_functions():
    assert std_normal_cdf(0.0) == 0.5
    assert std_normal_pdf(0.0) == pytest.approx(0.3989422804, abs=1e-10)
    assert std_normal_cdf(1.959963985) == pytest.approx(0.975, abs=1e-9)
    for x in (0.5, 1.0, 3.0):
        assert std_normal_cdf(-x) + std_normal_cdf(x) == pytest.approx(1.0, abs=1e-15)


def test_smoothing_matrix():
    H = SmoothingMatrix.identity(2, 4)
    np.testing.assert_array_equal(H.h, np.eye(2) / 4)
    np.testing.assert_array_equal(H.scaled(0.5).h, np.eye(2) / 8)
    with pytest.raises(ZeroSmoothingScale):
        SmoothingMatrix.from_sigma([[1.0, 0.5], [0.0, 1.0]], 4)


def test_u_nonsmooth_balanced_split(make_context):
    ctx = make_context(y=[-1.0, 1.0], w=[1.0, 1.0])
    np.testing.assert_array_equal(u_nonsmooth([0.0], ctx), [0.0])


def test_u_nonsmooth_below_all_responses(make_context):
    ctx = make_context(y=[-1.0, 0.5, 1.0], w=[1.0, 1.0, 1.0])
    np.testing.assert_allclose(u_nonsmooth([-10.0], ctx), [-0.5])


def test_u_nonsmooth_weighted_example(make_context):
    ctx = make_context(y=[0.0, 0.0, 1.0, 1.0], w=[2.0, 0.0, 1.0, 1.0])
    np.testing.assert_allclose(u_nonsmooth([0.5], ctx), [0.0], atol=1e-15)


def test_l1_objective_at_zero(make_context):
    ctx = make_context(y=[-1.0, 0.5, 2.0], w=[1.0, 0.0, 2.0])
    big_m = 1e6
    expected = (1.0 * 1.0 + 2.0 * 2.0) / 3 + 2 * big_m / 3
    assert l1_objective([0.0], ctx, big_m) == pytest.approx(expected, rel=1e-14)


def test_l1_pseudo_rows(make_context):
    ctx = make_context(y=[-1.0, 0.5, 2.0], w=[1.0, 0.0, 2.0], tau=0.25)
    a1, a2 = l1_pseudo_rows(ctx)
    np.testing.assert_allclose(a1, [-3.0])
    np.testing.assert_allclose(a2, [1.5])


def test_l1_objective_big_m_too_small(make_context):
    ctx = make_context(y=[-1.0, 0.5, 2.0], w=[1.0, 1.0, 1.0], tau=0.25)
    with pytest.raises(BigMTooSmall):
        l1_objective([10.0], ctx, big_m=1.0)


def test_u_smoothed_symmetric(make_context):
    b, a = 0.7, 0.4
    ctx = make_context(y=[b - a, b + a], w=[1.0, 1.0])
    H = SmoothingMatrix.identity(1, 2)
    np.testing.assert_allclose(u_smoothed([b], ctx, H), [0.0], atol=1e-14)


def test_u_smoothed_vanishing_bandwidth(make_context):
    ctx = make_context(y=[-1.0, 0.3, 2.0], w=[1.0, 2.0, 0.5], tau=0.3)
    H = SmoothingMatrix.identity(1, 3).scaled(1e-20)
    np.testing.assert_allclose(u_smoothed([0.5], ctx, H), u_nonsmooth([0.5], ctx), atol=1e-10)


def test_perturbed_score_unit_multipliers(generated_sample):
    curve = fit_censoring_km(generated_sample)
    ctx = build_score_context(generated_sample, 0.5, 0.0, curve)
    H = SmoothingMatrix.identity(ctx.dim, generated_sample.n)
    beta = np.array([1.6, 0.7])
    eta = np.ones(generated_sample.n)
    perturbed = u_smoothed_perturbed(beta, perturbed_context(ctx, generated_sample, eta), H, eta)
    np.testing.assert_array_equal(perturbed, u_smoothed(beta, ctx, H))


def test_perturbed_score_homogeneous(generated_sample):
    curve = fit_censoring_km(generated_sample)
    ctx = build_score_context(generated_sample, 0.5, 1.0, curve)
    H = SmoothingMatrix.identity(ctx.dim, generated_sample.n)
    beta = np.array([1.4, 0.8])
    ones = np.ones(generated_sample.n)
    twos = 2.0 * ones
    unit = u_smoothed_perturbed(beta, perturbed_context(ctx, generated_sample, ones), H, ones)
    doubled = u_smoothed_perturbed(beta, perturbed_context(ctx, generated_sample, twos), H, twos)
    np.testing.assert_allclose(doubled, 2.0 * unit, rtol=1e-14, atol=1e-15)


def test_perturbed_score_single_subject():
    sample = SurvivalSample.from_arrays([2.0], [1])
    ctx = build_score_context(sample, 0.3, 0.0, fit_censoring_km(sample))
    H = SmoothingMatrix.identity(1, 1)
    eta = np.array([1.7])
    beta = np.array([0.2])
    expected = 1.7 * (std_normal_cdf(beta[0] - math.log(2.0)) - 0.3)
    np.testing.assert_allclose(u_smoothed_perturbed(beta, perturbed_context(ctx, sample, eta), H, eta), [expected])


def test_slope_matrix_finite_differences(generated_sample):
    status = generated_sample.status[:10].copy()
    status[:3] = 1
    ten = SurvivalSample.from_arrays(generated_sample.time[:10], status, generated_sample.covariates[:10],
                                     covariate_names=('x',))
    ctx = build_score_context(ten, 0.5, 0.0, fit_censoring_km(ten))
    H = SmoothingMatrix.identity(2, ten.n)
    beta = np.array([1.5, 0.5])
    step = 1e-5
    numeric = np.empty((2, 2))
    for j in range(2):
        e = np.zeros(2)
        e[j] = step
        numeric[:, j] = (u_smoothed(beta + e, ctx, H) - u_smoothed(beta - e, ctx, H)) / (2 * step)
    analytic = slope_matrix(beta, ctx, H)
    np.testing.assert_allclose(analytic, numeric, rtol=1e-6, atol=1e-12)


def test_slope_matrix_no_events(make_context):
    ctx = make_context(y=[0.1, 0.2], w=[0.0, 0.0])
    H = SmoothingMatrix.identity(1, 2)
    np.testing.assert_array_equal(slope_matrix([0.0], ctx, H), [[0.0]])


def test_slope_matrix_single_subject(make_context):
    ctx = make_context(y=[0.4], w=[1.0])
    H = SmoothingMatrix.identity(1, 1)
    np.testing.assert_allclose(slope_matrix([1.0], ctx, H), [[std_normal_pdf(0.6)]])


@given(shift=st.floats(min_value=-5.0, max_value=5.0))
def test_location_equivariance(shift):
    x = np.column_stack([np.ones(6), [0.0, 1.0, 0.0, 1.0, 0.5, 0.2]])
    y = np.array([-1.0, 0.4, 1.3, 2.2, 0.9, -0.3])
    w = np.array([1.0, 2.0, 0.0, 1.5, 1.0, 0.5])
    beta = np.array([0.05, 0.55])

    def context(offset):
        return ScoreContext(n=6, tau=0.4, t0=0.0, weighting=Weighting.LI, g_floor=1e-10, indices=np.arange(6),
                            x=x, y=y + offset, w=w, c=np.ones(6))

    H = SmoothingMatrix.identity(2, 6)
    moved = beta + np.array([shift, 0.0])
    np.testing.assert_allclose(u_smoothed(moved, context(shift), H), u_smoothed(beta, context(0.0), H), atol=1e-12)
    np.testing.assert_allclose(u_nonsmooth(moved, context(shift)), u_nonsmooth(beta, context(0.0)), atol=1e-12)
    np.testing.assert_allclose(slope_matrix(moved, context(shift), H), slope_matrix(beta, context(0.0), H),
                               atol=1e-12)


def test_kim_weights_cover_tau_term(three_subjects):
    curve = fit_censoring_km(three_subjects)
    li = build_score_context(three_subjects, 0.5, 0.0, curve, Weighting.LI)
    kim = build_score_context(three_subjects, 0.5, 0.0, curve, Weighting.KIM)
    np.testing.assert_array_equal(li.c, [1.0, 1.0, 1.0])
    np.testing.assert_array_equal(kim.c, kim.w)
    np.testing.assert_array_equal(kim.w, [1.0, 0.0, 2.0])


def test_zero_design_row():
    sample = SurvivalSample.from_arrays([1.0, 2.0], [1, 1], [0.0, 1.0], intercept=False)
    with pytest.raises(ZeroSmoothingScale):
        build_score_context(sample, 0.5, 0.0, fit_censoring_km(sample))
