"""
Kaplan-Meier estimation of the censoring survival function G, its multiplier-perturbed version, and the
inverse probability of censoring weights built from it.
"""
from dataclasses import dataclass
import logging
import warnings

import numpy as np

from rlqr.data import Weighting
from rlqr.errors import DegenerateWeights, LengthMismatch, NonPositiveMultiplier

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class StepSurvival:
    """
    Right-continuous, nonincreasing step function starting at 1.

    Attributes:
        jump_times (np.ndarray): Strictly increasing jump locations.
        values (np.ndarray): Value on [jump_times[k], jump_times[k + 1]); the curve is 1 before jump_times[0].
    """
    jump_times: np.ndarray
    values: np.ndarray

    def __call__(self, t):
        return eval_survival(self, t)

    @property
    def is_constant(self):
        return self.jump_times.size == 0


def _product_limit(time, status, weights):
    """
    Weighted product-limit estimate treating status 0 as the event of interest.

    Censoring counts at u use only status-0 records; the risk set at u counts everyone with Z >= u.
    """
    order = np.argsort(time, kind='stable')
    t = time[order]
    w = weights[order]
    censored = (status[order] == 0).astype(float)

    unique_times, first = np.unique(t, return_index=True)
    at_risk = np.cumsum(w[::-1])[::-1][first]
    d_censor = np.add.reduceat(w * censored, first)

    jumps = d_censor > 0.0
    factors = 1.0 - d_censor[jumps] / at_risk[jumps]
    values = np.clip(np.cumprod(factors), 0.0, 1.0)

    jump_times = unique_times[jumps].copy()
    jump_times.setflags(write=False)
    values.setflags(write=False)
    return StepSurvival(jump_times=jump_times, values=values)


def fit_censoring_km(sample):
    """
    Kaplan-Meier estimate of the censoring time survival function.

    Args:
        sample (SurvivalSample): A validated sample.

    Returns:
        StepSurvival: G-hat, jumping only at censoring times.
    """
    return _product_limit(sample.time, sample.status, np.ones(sample.n))


def fit_perturbed_km(sample, eta):
    """
    Multiplier-perturbed Kaplan-Meier estimate of the censoring survival function: every subject's
        contribution to the censoring counts and to the risk set is scaled by its multiplier.

    Args:
        sample (SurvivalSample): A validated sample.
        eta (array-like): Positive multipliers, one per subject.

    Returns:
        StepSurvival: G-hat-star.

    Raises:
        LengthMismatch: len(eta) != n.
        NonPositiveMultiplier: some multiplier <= 0.
    """
    eta = np.asarray(eta, dtype=float)
    if eta.shape != (sample.n,):
        raise LengthMismatch(f'Expected {sample.n} multipliers, got {eta.size}.')
    if not np.all(eta > 0.0):
        raise NonPositiveMultiplier(f'Multipliers must be positive; minimum is {eta.min()}.')
    return _product_limit(sample.time, sample.status, eta)


def eval_survival(curve, t):
    """
    Evaluate a step survival curve, right-continuously.

    Args:
        curve (StepSurvival): The curve.
        t (float or array-like): Evaluation time(s), >= 0.

    Returns:
        float or np.ndarray: curve value(s) in [0, 1].
    """
    t_arr = np.asarray(t, dtype=float)
    idx = np.searchsorted(curve.jump_times, t_arr, side='right')
    result = np.concatenate(([1.0], curve.values))[idx]
    if np.ndim(t) == 0:
        return float(result)
    return result


def ipcw_weight(i, t0, curve, sample, scheme, floor):
    """
    IPCW weight of one subject at risk beyond t0.

    Args:
        i (int): Subject index.
        t0 (float): Follow-up time.
        curve (StepSurvival): Censoring survival estimate.
        sample (SurvivalSample): The sample.
        scheme (Weighting): LI gives delta * G(t0) / G(Z); KIM gives delta / G(Z).
        floor (float): Lower bound applied to G(Z) in the denominator.

    Returns:
        float: the weight (0 for censored subjects).
    """
    weights = ipcw_weights(np.array([i]), t0, curve, sample, scheme, floor)
    return float(weights[0])


def ipcw_weights(indices, t0, curve, sample, scheme, floor):
    """
    Vectorized IPCW weights for the given subjects. Issues a DegenerateWeights warning when an uncensored
        subject's G(Z) is at or below the floor; the floored weight is used.

    Returns:
        np.ndarray: weights aligned with ``indices``.
    """
    scheme = Weighting(scheme)
    status = sample.status[indices]
    g_at_z = np.asarray(eval_survival(curve, sample.time[indices]), dtype=float)
    events = status == 1

    degenerate = events & (g_at_z <= floor)
    if np.any(degenerate):
        message = (f'{int(degenerate.sum())} uncensored subject(s) beyond t0 = {t0} have censoring '
                   f'survival <= {floor}; weights use the floored value.')
        log.warning(message)
        warnings.warn(message, DegenerateWeights, stacklevel=2)

    numerator = eval_survival(curve, t0) if scheme is Weighting.LI else 1.0
    weights = np.zeros(indices.shape[0])
    weights[events] = numerator / np.maximum(g_at_z[events], floor)
    return weights
