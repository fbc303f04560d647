"""
Point estimation: the non-smooth estimator by linear programming, Newton-Raphson on the smoothed score at
a fixed H, and the iterative algorithm that alternates Newton updates with sandwich updates of H.
"""
from dataclasses import dataclass, replace
import enum
import logging

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from rlqr.data import validate_sample
from rlqr.errors import LpFailure, MaxIterExceeded, NonPositiveDefiniteSigma, SingularSlope, Unidentifiable
from rlqr.estimating import SmoothingMatrix, l1_objective, l1_pseudo_rows, slope_matrix, u_nonsmooth, u_smoothed
from rlqr.inference import MAX_CONDITION, context_for, estimate_covariance

log = logging.getLogger(__name__)

# Step halvings allowed when a full Newton step increases the score norm
MAX_HALVINGS = 10

# Factor applied to big_m when a pseudo-row binds at the L1 solution
BIG_M_ESCALATION = 10.0
# Relative slack under which a pseudo-row fitted value counts as reaching big_m
PSEUDO_ROW_RTOL = 1e-9


class Method(str, enum.Enum):
    NONSMOOTH_LP = "nonsmooth_lp"
    SMOOTHED_FIXED_H = "smoothed_fixed_h"
    SMOOTHED_ITERATIVE = "smoothed_iterative"


@dataclass(frozen=True)
class SolveReport:
    """
    Outcome of one point-estimation run.

    Attributes:
        beta_hat (np.ndarray): Coefficient estimate.
        iterations (int): Iterations used (simplex iterations for the LP).
        converged (bool): Whether the stopping rule was met (LP: optimality certified).
        final_score_norm (float): Max-abs score at beta_hat (non-smooth score for the LP).
        method (Method): Which estimator produced beta_hat.
        n_effective (int): Subjects at risk beyond t0.
        n_events (int): Events beyond t0.
        damped_steps (int): Newton steps that needed halving.
        fallback (bool): The iterative algorithm fell back to the fixed-H policy.
    """
    beta_hat: np.ndarray
    iterations: int
    converged: bool
    final_score_norm: float
    method: Method
    n_effective: int = 0
    n_events: int = 0
    damped_steps: int = 0
    fallback: bool = False


def check_identifiable(ctx):
    """
    Raise Unidentifiable unless the events beyond t0 determine all p + 1 coefficients.

    Args:
        ctx (ScoreContext): Score context.
    """
    events = ctx.w > 0.0
    n_events = int(np.count_nonzero(events))
    if n_events < ctx.dim:
        raise Unidentifiable(f'Only {n_events} event(s) beyond t0 = {ctx.t0} for {ctx.dim} coefficients.')
    if np.linalg.matrix_rank(ctx.x[events]) < ctx.dim:
        raise Unidentifiable(f'Design rows of the events beyond t0 = {ctx.t0} do not have full rank '
                             f'{ctx.dim}.')


def prepare_context(spec, sample):
    """
    Validate the sample, build its score context under spec, and check identifiability.

    Returns:
        ScoreContext: the context.
    """
    validate_sample(sample)
    ctx = context_for(spec, sample)
    check_identifiable(ctx)
    return ctx


def _solve_l1(ctx, big_m):
    """Solve the augmented weighted LAD problem at pseudo-response big_m; returns (linprog result, a1, a2)."""
    keep = ctx.w > 0.0
    a1, a2 = l1_pseudo_rows(ctx)
    rows = np.vstack([ctx.x[keep], a1, a2])
    response = np.concatenate([ctx.y[keep], [big_m, big_m]])
    row_weights = np.concatenate([ctx.w[keep], [1.0, 1.0]])

    # Variables: beta (free), positive and negative residual parts
    m, k = rows.shape
    cost = np.concatenate([np.zeros(k), row_weights, row_weights]) / ctx.n
    identity = sparse.identity(m, format='csr')
    a_eq = sparse.hstack([sparse.csr_matrix(rows), identity, -identity], format='csr')
    bounds = [(None, None)] * k + [(0.0, None)] * (2 * m)
    result = linprog(cost, A_eq=a_eq, b_eq=response, bounds=bounds, method='highs-ds')

    if result.status in (2, 3):
        raise Unidentifiable(f'L1 problem at t0 = {ctx.t0} is {"infeasible" if result.status == 2 else "unbounded"}.')
    if result.status != 0:
        raise LpFailure(f'L1 problem at t0 = {ctx.t0} failed: {result.message}')
    return result, a1, a2


def _pseudo_rows_bind(beta, a1, a2, big_m):
    return bool(np.any(np.vstack([a1, a2]) @ beta >= big_m * (1.0 - PSEUDO_ROW_RTOL)))


def fit_nonsmooth(spec, sample, ctx=None):
    """
    Non-smooth estimator: minimize the augmented weighted absolute loss as a linear program.

    When a pseudo-row reaches M at the solution the problem is solved again at BIG_M_ESCALATION * M. A
        pseudo-row that still binds means the weighted estimating equation has no root at any M.

    Args:
        spec (FitSpec): Fit specification.
        sample (SurvivalSample): The sample.
        ctx (ScoreContext): Prebuilt context (optional).

    Returns:
        SolveReport: the LP solution.

    Raises:
        Unidentifiable: too few events beyond t0, the LP is unbounded or infeasible, or the pseudo-rows bind
            at every M.
        LpFailure: the LP solver stopped without a certificate.
    """
    if ctx is None:
        ctx = prepare_context(spec, sample)
    else:
        check_identifiable(ctx)
    big_m = spec.big_m
    result, a1, a2 = _solve_l1(ctx, big_m)
    k = ctx.dim
    beta = result.x[:k]
    if _pseudo_rows_bind(beta, a1, a2, big_m):
        log.warning(f'Pseudo-observations bind at big_m = {big_m:g}; solving again at '
                    f'{BIG_M_ESCALATION * big_m:g}.')
        big_m = BIG_M_ESCALATION * big_m
        result, a1, a2 = _solve_l1(ctx, big_m)
        beta = result.x[:k]
        if _pseudo_rows_bind(beta, a1, a2, big_m):
            raise Unidentifiable(f'Weighted estimating equation at t0 = {ctx.t0} has no root: the L1 solution '
                                 f'runs to the pseudo-observation bound for every big_m.')
    objective = l1_objective(beta, ctx, big_m)
    log.debug(f'Non-smooth estimate {beta} (objective {objective:.10g}, {result.nit} simplex iterations)')
    return SolveReport(
        beta_hat=beta,
        iterations=int(result.nit),
        converged=True,
        final_score_norm=float(np.max(np.abs(u_nonsmooth(beta, ctx)))),
        method=Method.NONSMOOTH_LP,
        n_effective=ctx.n_effective,
        n_events=ctx.n_events,
    )


def _newton_direction(a, u, pinv_used):
    """Solve A d = U, falling back to the pseudo-inverse once."""
    cond = np.linalg.cond(a)
    if np.isfinite(cond) and cond <= MAX_CONDITION:
        return np.linalg.solve(a, u), pinv_used
    if pinv_used:
        raise SingularSlope(f'Slope matrix singular again (condition number {cond:.3g}).')
    log.warning(f'Slope matrix near singular (condition number {cond:.3g}); taking a pseudo-inverse step.')
    return np.linalg.pinv(a) @ u, True


def newton_solve(ctx, H, beta, max_iter, tol, method=Method.SMOOTHED_FIXED_H):
    """
    Newton-Raphson iterations beta <- beta - A(beta)^-1 U(beta) on the smoothed score at fixed H. A step
        that increases the Euclidean score norm is halved up to MAX_HALVINGS times.

    Args:
        ctx (ScoreContext): Score context.
        H (SmoothingMatrix): Smoothing matrix.
        beta (np.ndarray): Starting value.
        max_iter (int): Maximum number of Newton steps.
        tol (float): Stop when the max-abs update or the max-abs score is at most tol.
        method (Method): Method label for the report.

    Returns:
        SolveReport: report, with converged False when the budget ran out.
    """
    beta = np.array(beta, dtype=float)
    u = u_smoothed(beta, ctx, H)
    pinv_used = False
    damped = 0
    converged = False
    iterations = 0

    while iterations < max_iter:
        if np.max(np.abs(u)) <= tol:
            converged = True
            break
        step, pinv_used = _newton_direction(slope_matrix(beta, ctx, H), u, pinv_used)
        norm0 = np.linalg.norm(u)
        t = 1.0
        for halving in range(MAX_HALVINGS + 1):
            candidate = beta - t * step
            u_candidate = u_smoothed(candidate, ctx, H)
            if np.linalg.norm(u_candidate) < norm0 or halving == MAX_HALVINGS:
                break
            t /= 2.0
        if t < 1.0:
            damped += 1
            log.warning(f'Newton step {iterations + 1} damped by a factor {t:g}.')
        iterations += 1
        delta = np.max(np.abs(candidate - beta))
        beta, u = candidate, u_candidate
        log.debug(f'Newton step {iterations}: max |update| = {delta:.3e}, max |U| = {np.max(np.abs(u)):.3e}')
        if delta <= tol or np.max(np.abs(u)) <= tol:
            converged = True
            break

    return SolveReport(
        beta_hat=beta,
        iterations=iterations,
        converged=converged,
        final_score_norm=float(np.max(np.abs(u))),
        method=method,
        n_effective=ctx.n_effective,
        n_events=ctx.n_events,
        damped_steps=damped,
    )


def fit_smoothed(spec, sample, init=None, smoothing=None, ctx=None):
    """
    Induced-smoothed estimator at a fixed smoothing matrix (H = I/n unless given).

    Args:
        spec (FitSpec): Fit specification.
        sample (SurvivalSample): The sample.
        init (np.ndarray): Starting value; defaults to the non-smooth estimate. Pass np.zeros(p + 1) for a
            cold start.
        smoothing (SmoothingMatrix): Smoothing matrix; defaults to I/n.
        ctx (ScoreContext): Prebuilt context (optional).

    Returns:
        SolveReport: the converged report.

    Raises:
        MaxIterExceeded: Newton did not converge within spec.max_iter steps (the exception carries the report).
        SingularSlope: the slope matrix was singular twice.
        Unidentifiable: too few events beyond t0.
    """
    if ctx is None:
        ctx = prepare_context(spec, sample)
    else:
        check_identifiable(ctx)
    H = smoothing if smoothing is not None else SmoothingMatrix.identity(ctx.dim, sample.n)
    if init is None:
        init = fit_nonsmooth(spec, sample, ctx=ctx).beta_hat
    init = np.asarray(init, dtype=float)
    if init.shape != (ctx.dim,) or not np.all(np.isfinite(init)):
        raise ValueError(f'"init" must be a finite vector of length {ctx.dim}.')

    report = newton_solve(ctx, H, init, spec.max_iter, spec.tol)
    if not report.converged:
        raise MaxIterExceeded(f'Newton-Raphson did not converge in {spec.max_iter} iterations '
                              f'(max |U| = {report.final_score_norm:.3e}).', report=report)
    return report


def fit_iterative(spec, sample, ctx=None, init=None):
    """
    Iterative algorithm: start from the non-smooth estimate with Sigma = I and H = Sigma/n; alternate one
        Newton update of beta at the current H with a sandwich update of Sigma, then set H = Sigma/n, until
        both beta and Sigma stop changing.

    Args:
        spec (FitSpec): Fit specification.
        sample (SurvivalSample): The sample.
        ctx (ScoreContext): Prebuilt context (optional).
        init (np.ndarray): Non-smooth estimate if already computed.

    Returns:
        tuple: (SolveReport, CovarianceResult) at convergence. When Sigma loses positive definiteness the run
            falls back to the fixed H = I/n estimator and the report has ``fallback`` set.

    Raises:
        MaxIterExceeded: no convergence within spec.max_iter iterations (carries report and sigma).
    """
    if ctx is None:
        ctx = prepare_context(spec, sample)
    else:
        check_identifiable(ctx)
    n = sample.n
    beta = np.asarray(init, dtype=float) if init is not None else fit_nonsmooth(spec, sample, ctx=ctx).beta_hat
    sigma = np.eye(ctx.dim)
    H = SmoothingMatrix.from_sigma(sigma, n)
    damped = 0
    covariance = None

    for iteration in range(1, spec.max_iter + 1):
        step = newton_solve(ctx, H, beta, 1, spec.tol, method=Method.SMOOTHED_ITERATIVE)
        damped += step.damped_steps
        covariance = estimate_covariance(step.beta_hat, spec, sample, H, ctx=ctx)
        try:
            _check_positive_definite(covariance.sigma)
        except NonPositiveDefiniteSigma as e:
            log.warning(f'{e} Falling back to the fixed H = I/n estimator.')
            return _fixed_h_fallback(spec, sample, ctx, step.beta_hat)

        beta_change = np.max(np.abs(step.beta_hat - beta))
        sigma_change = np.max(np.abs(covariance.sigma - sigma))
        log.debug(f'Iteration {iteration}: max |beta change| = {beta_change:.3e}, '
                  f'max |Sigma change| = {sigma_change:.3e}')
        beta, sigma = step.beta_hat, covariance.sigma
        H = SmoothingMatrix.from_sigma(sigma, n)

        if beta_change <= spec.tol and sigma_change <= spec.sigma_tol * max(1.0, np.max(np.abs(sigma))):
            report = replace(step, iterations=iteration, converged=True, damped_steps=damped)
            return report, covariance

    report = replace(step, iterations=spec.max_iter, converged=False, damped_steps=damped)
    raise MaxIterExceeded(f'Iterative algorithm did not converge in {spec.max_iter} iterations.',
                          report=report, sigma=sigma)


def _check_positive_definite(sigma):
    eigenvalues = np.linalg.eigvalsh(sigma)
    if not np.all(np.isfinite(eigenvalues)) or eigenvalues.min() <= 0.0:
        raise NonPositiveDefiniteSigma(f'Covariance update is not positive definite '
                                       f'(smallest eigenvalue {eigenvalues.min():.3g}).')


def _fixed_h_fallback(spec, sample, ctx, beta):
    H = SmoothingMatrix.identity(ctx.dim, sample.n)
    report = fit_smoothed(spec, sample, init=beta, smoothing=H, ctx=ctx)
    covariance = estimate_covariance(report.beta_hat, spec, sample, H, ctx=ctx)
    return replace(report, fallback=True), covariance
