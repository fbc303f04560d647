import math

import numpy as np
import pytest

from rlqr.data import SurvivalSample, Weighting
from rlqr.estimating import ScoreContext
from rlqr.simulation.scenario import SimScenario, generate_dataset


@pytest.fixture
def three_subjects():
    """Z = [1, 2, 3], delta = [1, 0, 1], intercept only."""
    return SurvivalSample.from_arrays([1.0, 2.0, 3.0], [1, 0, 1])


@pytest.fixture
def lad_sample():
    """Five uncensored points on a line-ish pattern whose LAD fit is (0.1, 0.95)."""
    x = np.array([0.0, 1.0, 2.0, 3.0, 4.0])
    y = np.array([0.1, 1.3, 1.9, 3.4, 3.9])
    return SurvivalSample.from_arrays(np.exp(y), np.ones(5, dtype=int), x, covariate_names=('x',))


@pytest.fixture
def scenario_30():
    return SimScenario(n=200, censor_target=0.3, beta1_base=math.log(2.0), t0_list=(0.0, 2.0), reps=4,
                       seed=11)


@pytest.fixture
def generated_sample(scenario_30):
    return generate_dataset(scenario_30, 0)


@pytest.fixture
def make_context():
    """Factory for hand-built score contexts on the effective sample (t0 = 0, Li weighting)."""
    def _make(y, w, x=None, tau=0.5, n=None):
        y = np.asarray(y, dtype=float)
        w = np.asarray(w, dtype=float)
        x = np.ones((y.size, 1)) if x is None else np.asarray(x, dtype=float)
        return ScoreContext(n=y.size if n is None else n, tau=tau, t0=0.0, weighting=Weighting.LI, g_floor=1e-10,
                            indices=np.arange(y.size), x=x, y=y, w=w, c=np.ones(y.size))
    return _make


@pytest.fixture
def rootless_sample():
    """
    Six uncensored subjects with x = 0 and six with x = 1 of which only the earliest is an event. The x = 1
        group's weighted event count (1) stays below tau times its size (3), so the estimating equation has
        no root in the slope.
    """
    time = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 0.5, 1.5, 2.5, 3.5, 4.5, 5.5]
    status = [1, 1, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0]
    x = [0.0] * 6 + [1.0] * 6
    return SurvivalSample.from_arrays(time, status, x, covariate_names=('x',))
