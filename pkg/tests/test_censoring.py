import numpy as np
import pytest
from hypothesis import given, strategies as st

from rlqr.censoring import eval_survival, fit_censoring_km, fit_perturbed_km, ipcw_weight, ipcw_weights
from rlqr.data import SurvivalSample, Weighting
from rlqr.errors import DegenerateWeights, LengthMismatch, NonPositiveMultiplier
from rlqr.simulation.scenario import SimScenario, generate_dataset


def test_km_no_censoring():
    curve = fit_censoring_km(SurvivalSample.from_arrays([1.0, 2.0, 3.0], [1, 1, 1]))
    assert curve.is_constant
    for t in (0.0, 1.0, 2.5, 100.0):
        assert eval_survival(curve, t) == 1.0


def test_km_single_censoring(three_subjects):
    curve = fit_censoring_km(three_subjects)
    np.testing.assert_array_equal(curve.jump_times, [2.0])
    np.testing.assert_array_equal(curve.values, [0.5])
    assert eval_survival(curve, 0.0) == 1.0
    assert eval_survival(curve, 1.9) == 1.0
    assert eval_survival(curve, 2.0) == 0.5
    assert curve(3.0) == 0.5


def test_km_all_censored():
    curve = fit_censoring_km(SurvivalSample.from_arrays([1.0, 2.0], [0, 0]))
    np.testing.assert_array_equal(eval_survival(curve, [0.5, 1.0, 1.5, 2.0, 3.0]), [1.0, 0.5, 0.5, 0.0, 0.0])


def test_km_ties_counted_once():
    curve = fit_censoring_km(SurvivalSample.from_arrays([2.0, 2.0, 2.0, 4.0], [0, 0, 1, 1]))
    assert eval_survival(curve, 2.0) == pytest.approx(0.5)


def test_perturbed_km_unit_multipliers(three_subjects):
    km = fit_censoring_km(three_subjects)
    perturbed = fit_perturbed_km(three_subjects, np.ones(3))
    np.testing.assert_array_equal(km.jump_times, perturbed.jump_times)
    np.testing.assert_array_equal(km.values, perturbed.values)


def test_perturbed_km_weighted(three_subjects):
    curve = fit_perturbed_km(three_subjects, [1.0, 2.0, 1.0])
    assert eval_survival(curve, 2.0) == pytest.approx(1.0 / 3.0)
    assert eval_survival(curve, 1.0) == 1.0


def test_perturbed_km_single_censored_subject():
    curve = fit_perturbed_km(SurvivalSample.from_arrays([1.0], [0]), [5.0])
    assert eval_survival(curve, 1.0) == 0.0


def test_perturbed_km_errors(three_subjects):
    with pytest.raises(LengthMismatch):
        fit_perturbed_km(three_subjects, [1.0, 1.0])
    with pytest.raises(NonPositiveMultiplier):
        fit_perturbed_km(three_subjects, [1.0, 0.0, 1.0])


@given(
    data=st.lists(st.tuples(st.floats(min_value=0.01, max_value=100.0), st.integers(0, 1)),
                  min_size=1, max_size=40),
)
def test_km_nonincreasing(data):
    time, status = zip(*data)
    curve = fit_censoring_km(SurvivalSample.from_arrays(time, status))
    assert np.all(np.diff(curve.values) <= 0.0)
    assert np.all((curve.values >= 0.0) & (curve.values <= 1.0))
    assert eval_survival(curve, 0.0) == 1.0
    grid = np.linspace(0.0, 110.0, 57)
    assert np.all(np.diff(eval_survival(curve, grid)) <= 0.0)


def test_ipcw_weight_no_censoring():
    sample = SurvivalSample.from_arrays([1.0, 2.0, 3.0], [1, 1, 1])
    curve = fit_censoring_km(sample)
    for i in range(3):
        assert ipcw_weight(i, 0.0, curve, sample, Weighting.LI, 1e-10) == 1.0


def test_ipcw_weight_hand_example(three_subjects):
    curve = fit_censoring_km(three_subjects)
    assert ipcw_weight(2, 0.0, curve, three_subjects, Weighting.LI, 1e-10) == 2.0
    assert ipcw_weight(1, 0.0, curve, three_subjects, Weighting.LI, 1e-10) == 0.0
    assert ipcw_weight(2, 0.0, curve, three_subjects, Weighting.KIM, 1e-10) == 2.0


def test_ipcw_weight_schemes_differ_after_t0(three_subjects):
    curve = fit_censoring_km(three_subjects)
    # G(2.5) = G(3) = 0.5: the Li weight is relative to G(t0), the Kim weight is not
    assert ipcw_weight(2, 2.5, curve, three_subjects, Weighting.LI, 1e-10) == 1.0
    assert ipcw_weight(2, 2.5, curve, three_subjects, Weighting.KIM, 1e-10) == 2.0


def test_ipcw_weights_floor_warns(three_subjects):
    curve = fit_censoring_km(three_subjects)
    with pytest.warns(DegenerateWeights):
        weights = ipcw_weights(np.array([0, 1, 2]), 0.0, curve, three_subjects, Weighting.KIM, 0.6)
    np.testing.assert_allclose(weights, [1.0, 0.0, 1.0 / 0.6])


@pytest.mark.parametrize('t0', [1.0, 2.0])
def test_ipcw_weighted_events_estimate_event_survival(t0):
    scenario = SimScenario(n=2000, censor_target=0.3, reps=1, seed=23)
    sample = generate_dataset(scenario, 0)
    curve = fit_censoring_km(sample)
    indices = np.arange(sample.n)
    terms = ipcw_weights(indices, t0, curve, sample, Weighting.KIM, 1e-10) * (sample.time > t0)
    tolerance = 3 * terms.std(ddof=1) / np.sqrt(sample.n)
    assert terms.mean() == pytest.approx(float(scenario.event_survival(t0)), abs=tolerance)
    # The Li weights carry the extra factor G(t0)
    li = ipcw_weights(indices, t0, curve, sample, Weighting.LI, 1e-10) * (sample.time > t0)
    np.testing.assert_allclose(li, terms * eval_survival(curve, t0), rtol=1e-12)
