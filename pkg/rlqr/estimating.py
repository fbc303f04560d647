"""
Estimating functions for the residual-life quantile regression model log(T - t0) = X'beta + e.

All scores are written over two per-subject weight vectors evaluated on the effective sample (Z > t0):
``w`` multiplies the indicator (or its smoothed version) and ``c`` multiplies tau. The Li scheme uses
w = delta G(t0)/G(Z) and c = 1; the Kim scheme uses w = delta/G(Z) and c = w. Every sum is divided by the
full sample size n.
"""
from dataclasses import dataclass, replace
import logging

import numpy as np
from scipy.stats import norm

from rlqr.censoring import fit_perturbed_km, ipcw_weights
from rlqr.data import Weighting, effective_indices
from rlqr.errors import BigMTooSmall, LengthMismatch, ZeroSmoothingScale

log = logging.getLogger(__name__)


def std_normal_cdf(x):
    """Standard normal cumulative distribution function."""
    return norm.cdf(x)


def std_normal_pdf(x):
    """Standard normal density."""
    return norm.pdf(x)


@dataclass(frozen=True)
class SmoothingMatrix:
    """
    Covariance H of the Gaussian perturbation used for induced smoothing, stored already scaled by 1/n.

    Attributes:
        h (np.ndarray): (p + 1) x (p + 1) symmetric positive definite matrix.
    """
    h: np.ndarray

    @classmethod
    def from_sigma(cls, sigma, n):
        """
        Build H = sigma / n.

        Args:
            sigma (np.ndarray): Symmetric positive definite matrix.
            n (int): Sample size.
        """
        sigma = np.asarray(sigma, dtype=float)
        if sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1]:
            raise ZeroSmoothingScale(f'Smoothing matrix must be square, got shape {sigma.shape}.')
        if not np.allclose(sigma, sigma.T, rtol=1e-10, atol=1e-12):
            raise ZeroSmoothingScale('Smoothing matrix must be symmetric.')
        h = (sigma + sigma.T) / 2.0 / n
        h.setflags(write=False)
        return cls(h=h)

    @classmethod
    def identity(cls, dim, n):
        """H = I / n."""
        return cls.from_sigma(np.eye(dim), n)

    def scaled(self, factor):
        """Return factor * H, used to shrink the smoothing towards the non-smooth limit."""
        h = self.h * factor
        h.setflags(write=False)
        return SmoothingMatrix(h=h)


@dataclass(frozen=True)
class ScoreContext:
    """
    Everything the estimating functions need, restricted to the effective sample.

    Attributes:
        n (int): Full sample size (the divisor of every score).
        tau (float): Quantile level.
        t0 (float): Follow-up time.
        weighting (Weighting): IPCW scheme.
        g_floor (float): Floor used for IPCW denominators.
        indices (np.ndarray): Effective subject indices in input order.
        x (np.ndarray): Design rows of the effective subjects.
        y (np.ndarray): log(Z - t0) for the effective subjects.
        w (np.ndarray): Indicator weights.
        c (np.ndarray): Tau weights.
    """
    n: int
    tau: float
    t0: float
    weighting: Weighting
    g_floor: float
    indices: np.ndarray
    x: np.ndarray
    y: np.ndarray
    w: np.ndarray
    c: np.ndarray

    @property
    def dim(self):
        return self.x.shape[1]

    @property
    def n_effective(self):
        return int(self.indices.size)

    @property
    def n_events(self):
        """Number of effective subjects with a positive weight (events beyond t0)."""
        return int(np.count_nonzero(self.w > 0.0))


def _tau_weights(w, weighting):
    return w.copy() if weighting is Weighting.KIM else np.ones_like(w)


def build_score_context(sample, tau, t0, curve, weighting=Weighting.LI, g_floor=1e-10):
    """
    Build the score context of a sample at a follow-up time.

    Args:
        sample (SurvivalSample): A validated sample.
        tau (float): Quantile level.
        t0 (float): Follow-up time.
        curve (StepSurvival): Censoring survival estimate used for the weights.
        weighting (Weighting): IPCW scheme.
        g_floor (float): IPCW denominator floor.

    Returns:
        ScoreContext: the context.

    Raises:
        EmptyRiskSet: nobody is at risk beyond t0.
        ZeroSmoothingScale: an effective subject has an all-zero design row.
    """
    weighting = Weighting(weighting)
    indices = effective_indices(sample, t0)
    x = sample.design_matrix[indices]
    zero_rows = ~np.any(x != 0.0, axis=1)
    if np.any(zero_rows):
        raise ZeroSmoothingScale(f'Subject {int(indices[zero_rows][0])} has an all-zero design row; '
                                 f'its smoothing scale would be 0.')
    y = np.log(sample.time[indices] - t0)
    w = ipcw_weights(indices, t0, curve, sample, weighting, g_floor)
    for a in (indices, x, y, w):
        a.setflags(write=False)
    c = _tau_weights(w, weighting)
    c.setflags(write=False)
    return ScoreContext(n=sample.n, tau=float(tau), t0=float(t0), weighting=weighting, g_floor=g_floor,
                        indices=indices, x=x, y=y, w=w, c=c)


def perturbed_context(ctx, sample, eta):
    """
    Rebuild the weights of a context from the multiplier-perturbed censoring survival estimate.

    Args:
        ctx (ScoreContext): Unperturbed context of ``sample``.
        sample (SurvivalSample): The sample the context was built from.
        eta (np.ndarray): Positive multipliers, one per subject.

    Returns:
        ScoreContext: context whose weights use G-hat-star.
    """
    curve = fit_perturbed_km(sample, eta)
    w = ipcw_weights(ctx.indices, ctx.t0, curve, sample, ctx.weighting, ctx.g_floor)
    w.setflags(write=False)
    c = _tau_weights(w, ctx.weighting)
    c.setflags(write=False)
    return replace(ctx, w=w, c=c)


def smoothing_scales(ctx, H):
    """
    Per-subject smoothing scale sqrt(X_i' H X_i).

    Raises:
        ZeroSmoothingScale: some X_i' H X_i <= 0.
    """
    s2 = np.einsum('ij,jk,ik->i', ctx.x, H.h, ctx.x)
    if np.any(s2 <= 0.0):
        bad = int(ctx.indices[np.flatnonzero(s2 <= 0.0)[0]])
        raise ZeroSmoothingScale(f'X_i\'HX_i <= 0 for subject {bad}; H is not positive definite on the design.')
    return np.sqrt(s2)


def u_nonsmooth(beta, ctx):
    """
    Non-smooth IPCW estimating function.

    Args:
        beta (np.ndarray): Coefficients, length p + 1.
        ctx (ScoreContext): Score context.

    Returns:
        np.ndarray: score vector, length p + 1.
    """
    beta = np.asarray(beta, dtype=float)
    indicator = (ctx.y <= ctx.x @ beta).astype(float)
    return ctx.x.T @ (indicator * ctx.w - ctx.tau * ctx.c) / ctx.n


def l1_pseudo_rows(ctx):
    """
    Covariates of the two pseudo-observations that turn the weighted absolute loss into an objective
        whose gradient is proportional to the non-smooth score.

    Returns:
        tuple of np.ndarray: (a1, a2) with a1 = -sum X_l w_l and a2 = 2 tau sum X_l c_l.
    """
    a1 = -(ctx.x.T @ ctx.w)
    a2 = 2.0 * ctx.tau * (ctx.x.T @ ctx.c)
    return a1, a2


def l1_objective(beta, ctx, big_m):
    """
    Augmented weighted L1 objective. Pseudo-rows have response big_m and unit weight and are averaged
        together with the data rows.

    Args:
        beta (np.ndarray): Coefficients.
        ctx (ScoreContext): Score context.
        big_m (float): Pseudo-observation response.

    Returns:
        float: objective value.

    Raises:
        BigMTooSmall: a pseudo-row residual is negative at beta.
    """
    beta = np.asarray(beta, dtype=float)
    a1, a2 = l1_pseudo_rows(ctx)
    r1 = big_m - beta @ a1
    r2 = big_m - beta @ a2
    if r1 < 0.0 or r2 < 0.0:
        raise BigMTooSmall(f'big_m = {big_m} does not bound the pseudo-row terms at beta = {beta} '
                           f'(residuals {r1:.6g}, {r2:.6g}).')
    data_term = np.sum(ctx.w * np.abs(ctx.y - ctx.x @ beta))
    return float((data_term + r1 + r2) / ctx.n)


def _smoothed_bracket(beta, ctx, H):
    beta = np.asarray(beta, dtype=float)
    sigma = smoothing_scales(ctx, H)
    z = (ctx.x @ beta - ctx.y) / sigma
    return std_normal_cdf(z) * ctx.w - ctx.tau * ctx.c


def u_smoothed(beta, ctx, H):
    """
    Induced-smoothed estimating function: the indicator is replaced by Phi((X'beta - y) / sqrt(X'HX)).

    Args:
        beta (np.ndarray): Coefficients.
        ctx (ScoreContext): Score context.
        H (SmoothingMatrix): Smoothing matrix.

    Returns:
        np.ndarray: score vector, length p + 1.
    """
    return ctx.x.T @ _smoothed_bracket(beta, ctx, H) / ctx.n


def u_smoothed_perturbed(beta, ctx_perturbed, H, eta):
    """
    Multiplier-perturbed smoothed score. The multiplier scales each subject's whole summand, the tau term
        included.

    Args:
        beta (np.ndarray): Coefficients.
        ctx_perturbed (ScoreContext): Context whose weights come from perturbed_context(.., eta).
        H (SmoothingMatrix): Smoothing matrix.
        eta (np.ndarray): Multipliers for all n subjects.

    Returns:
        np.ndarray: perturbed score vector.

    Raises:
        LengthMismatch: len(eta) != n.
    """
    eta = np.asarray(eta, dtype=float)
    if eta.shape != (ctx_perturbed.n,):
        raise LengthMismatch(f'Expected {ctx_perturbed.n} multipliers, got {eta.size}.')
    bracket = _smoothed_bracket(beta, ctx_perturbed, H)
    return ctx_perturbed.x.T @ (eta[ctx_perturbed.indices] * bracket) / ctx_perturbed.n


def slope_matrix(beta, ctx, H):
    """
    Jacobian of u_smoothed with respect to beta:
        n^-1 sum_i w_i phi(z_i) X_i X_i' / sigma_i, z_i = (X_i'beta - y_i) / sigma_i.

    Positive semi-definite, so that beta - A^-1 U is a descent (Newton) step.

    Returns:
        np.ndarray: (p + 1) x (p + 1) matrix.
    """
    beta = np.asarray(beta, dtype=float)
    sigma = smoothing_scales(ctx, H)
    z = (ctx.x @ beta - ctx.y) / sigma
    d = ctx.w * std_normal_pdf(z) / sigma
    a = (ctx.x * d[:, None]).T @ ctx.x / ctx.n
    return (a + a.T) / 2.0
