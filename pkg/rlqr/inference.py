"""
Resampling estimate of the score variance, sandwich covariance, standard errors and Wald intervals.
"""
from dataclasses import dataclass
import logging

import numpy as np
from scipy.stats import norm

from rlqr.censoring import fit_censoring_km
from rlqr.errors import DegenerateResamples, LengthMismatch, SingularSlope
from rlqr.estimating import build_score_context, perturbed_context, slope_matrix, u_smoothed_perturbed
from rlqr.utils.random import draw_multipliers

log = logging.getLogger(__name__)

# Slope matrices with a larger condition number are treated as singular
MAX_CONDITION = 1e12


@dataclass(frozen=True)
class CovarianceResult:
    """
    Sandwich covariance of the smoothed estimator.

    Attributes:
        sigma (np.ndarray): Asymptotic covariance A^-1 V A^-1.
        var_beta (np.ndarray): sigma / n, the covariance of the coefficient estimates.
        se (np.ndarray): Standard errors sqrt(diag(var_beta)).
        resample_m (int): Number of resamples used for V.
        multiplier_law (str): Law of the multipliers.
        a_hat (np.ndarray): Slope matrix at the estimate.
        v_hat (np.ndarray): Score variance estimate.
    """
    sigma: np.ndarray
    var_beta: np.ndarray
    se: np.ndarray
    resample_m: int
    multiplier_law: str
    a_hat: np.ndarray
    v_hat: np.ndarray


def context_for(spec, sample, t0=None):
    """Score context of ``sample`` under ``spec`` (Kaplan-Meier weights)."""
    t0 = spec.t0 if t0 is None else t0
    curve = fit_censoring_km(sample)
    return build_score_context(sample, spec.tau, t0, curve, spec.weighting, spec.g_floor)


def resample_v(beta_hat, spec, sample, H, ctx=None):
    """
    Estimate the variance of sqrt(n) times the smoothed score by multiplier resampling: for each of
        spec.resample_m multiplier draws, rebuild the perturbed censoring survival estimate and evaluate the
        perturbed score at beta_hat; return n times the sample covariance of the perturbed scores.

    Args:
        beta_hat (np.ndarray): Converged coefficients.
        spec (FitSpec): Fit specification (tau, t0, weighting, seed, resample_m, multiplier_law,
            multiplier_keying).
        sample (SurvivalSample): The sample.
        H (SmoothingMatrix): Smoothing matrix.
        ctx (ScoreContext): Unperturbed context, rebuilt from spec when omitted.

    Returns:
        np.ndarray: (p + 1) x (p + 1) positive semi-definite matrix.

    Raises:
        LengthMismatch: beta_hat has the wrong dimension.
        DegenerateResamples: all perturbed scores are identical.
    """
    if ctx is None:
        ctx = context_for(spec, sample)
    beta_hat = np.asarray(beta_hat, dtype=float)
    if beta_hat.shape != (ctx.dim,):
        raise LengthMismatch(f'beta_hat has length {beta_hat.size}, expected {ctx.dim}.')

    scores = np.empty((spec.resample_m, ctx.dim))
    for k in range(spec.resample_m):
        eta = draw_multipliers(spec.seed, k, sample.n, spec.multiplier_law)
        if spec.multiplier_keying == "subject":
            eta = eta[sample.subject_ranks]
        ctx_k = perturbed_context(ctx, sample, eta)
        scores[k] = u_smoothed_perturbed(beta_hat, ctx_k, H, eta)

    if np.all(np.ptp(scores, axis=0) == 0.0):
        raise DegenerateResamples(f'All {spec.resample_m} perturbed scores are identical.')

    v = sample.n * np.atleast_2d(np.cov(scores, rowvar=False, ddof=1))
    return (v + v.T) / 2.0


def sandwich(a_hat, v_hat):
    """
    Sandwich matrix A^-1 V A^-T, symmetrized.

    Args:
        a_hat (np.ndarray): Invertible slope matrix.
        v_hat (np.ndarray): Middle matrix.

    Returns:
        np.ndarray: the sandwich.

    Raises:
        SingularSlope: a_hat is not invertible to working precision.
    """
    a_hat = np.atleast_2d(np.asarray(a_hat, dtype=float))
    v_hat = np.atleast_2d(np.asarray(v_hat, dtype=float))
    if not np.isfinite(np.linalg.cond(a_hat)) or np.linalg.cond(a_hat) > MAX_CONDITION:
        raise SingularSlope(f'Slope matrix is singular (condition number {np.linalg.cond(a_hat):.3g}).')
    left = np.linalg.solve(a_hat, v_hat)
    s = np.linalg.solve(a_hat, left.T).T
    return (s + s.T) / 2.0


def estimate_covariance(beta_hat, spec, sample, H, ctx=None):
    """
    Sandwich covariance of the smoothed estimator at beta_hat.

    Returns:
        CovarianceResult: covariance, standard errors and the matrices they came from.
    """
    if ctx is None:
        ctx = context_for(spec, sample)
    a_hat = slope_matrix(beta_hat, ctx, H)
    v_hat = resample_v(beta_hat, spec, sample, H, ctx=ctx)
    sigma = sandwich(a_hat, v_hat)
    var_beta = sigma / sample.n
    se = np.sqrt(np.clip(np.diag(var_beta), 0.0, None))
    log.debug(f'Sandwich covariance:\n{sigma}')
    return CovarianceResult(sigma=sigma, var_beta=var_beta, se=se, resample_m=spec.resample_m,
                            multiplier_law=spec.multiplier_law, a_hat=a_hat, v_hat=v_hat)


def wald_ci(beta_hat, var_beta, level=0.95):
    """
    Per-coefficient Wald confidence intervals beta_j +/- z se_j.

    Args:
        beta_hat (np.ndarray): Coefficients.
        var_beta (np.ndarray): Covariance matrix of the coefficients (or its diagonal).
        level (float): Confidence level in (0, 1).

    Returns:
        np.ndarray: (p + 1) x 2 array of (lower, upper).
    """
    beta_hat = np.asarray(beta_hat, dtype=float)
    var_beta = np.asarray(var_beta, dtype=float)
    variances = np.diag(var_beta) if var_beta.ndim == 2 else var_beta
    se = np.sqrt(np.clip(variances, 0.0, None))
    z = norm.ppf((1.0 + level) / 2.0)
    return np.column_stack([beta_hat - z * se, beta_hat + z * se])
