from dataclasses import dataclass, replace
import datetime as dt
import itertools
import logging

import humanize
import numpy as np
import pandas as pd

from rlqr.data import FitSpec, HPolicy, Weighting, read_survival_csv
from rlqr.errors import EXIT_INPUT, EXIT_OK, RlqrError
from rlqr.estimating import SmoothingMatrix
from rlqr.inference import estimate_covariance, wald_ci
from rlqr.solver import fit_iterative, fit_nonsmooth, fit_smoothed, prepare_context
from rlqr.utils.logging import setup_basic_logging
from rlqr.utils.output import OUTPUT_FORMATS, echoed_arguments, write_table
from rlqr.utils.random import MULTIPLIER_KEYINGS, MULTIPLIER_LAWS
from rlqr.utils.validation import (validate_file, validate_nonnegative_float, validate_open_unit,
                                   validate_positive_float, validate_positive_int)

_COMMAND_DESCRIPTION = "Fit the induced-smoothed quantile regression model for residual life to a " \
                       "right-censored dataset given as CSV (columns: time, status, covariates...). " \
                       "Reports point estimates, sandwich standard errors and Wald confidence intervals."
log = logging.getLogger(__name__)


@dataclass(frozen=True)
class FitResult:
    """
    Fitted model at one (tau, t0).

    Attributes:
        spec (FitSpec): Specification used.
        coefficient_names (tuple of str): Coefficient labels.
        beta_hat (np.ndarray): Smoothed estimate.
        beta_nonsmooth (np.ndarray): Non-smooth (LP) estimate used as the starting value.
        covariance (CovarianceResult): Sandwich covariance.
        ci (np.ndarray): Wald intervals, one (lower, upper) row per coefficient.
        level (float): Confidence level.
        report (SolveReport): Solver diagnostics.
        n (int): Sample size.
    """
    spec: FitSpec
    coefficient_names: tuple
    beta_hat: np.ndarray
    beta_nonsmooth: np.ndarray
    covariance: object
    ci: np.ndarray
    level: float
    report: object
    n: int

    @property
    def se(self):
        return self.covariance.se

    def to_frame(self):
        """One row per coefficient with the estimate, its standard error, the interval and diagnostics."""
        return pd.DataFrame({
            'tau': self.spec.tau,
            't0': self.spec.t0,
            'coef': list(self.coefficient_names),
            'PE': self.beta_hat,
            'SE': self.se,
            'lower': self.ci[:, 0],
            'upper': self.ci[:, 1],
            'n': self.n,
            'n_effective': self.report.n_effective,
            'n_events': self.report.n_events,
            'iterations': self.report.iterations,
            'converged': self.report.converged,
            'method': self.report.method.value,
        })


def fit_model(spec, sample, level=0.95):
    """
    Fit the smoothed estimator and its sandwich covariance.

    With the fixed policy the estimate solves the smoothed equations at H = I/n starting from the non-smooth
        estimate, and the covariance is computed once at the root. With the iterative policy H is updated from
        the covariance until both converge.

    Args:
        spec (FitSpec): Fit specification.
        sample (SurvivalSample): The sample.
        level (float): Confidence level of the Wald intervals.

    Returns:
        FitResult: the fitted model.
    """
    ctx = prepare_context(spec, sample)
    nonsmooth = fit_nonsmooth(spec, sample, ctx=ctx)
    if spec.h_policy is HPolicy.ITERATIVE:
        report, covariance = fit_iterative(spec, sample, ctx=ctx, init=nonsmooth.beta_hat)
    else:
        H = SmoothingMatrix.identity(ctx.dim, sample.n)
        report = fit_smoothed(spec, sample, init=nonsmooth.beta_hat, smoothing=H, ctx=ctx)
        covariance = estimate_covariance(report.beta_hat, spec, sample, H, ctx=ctx)
    ci = wald_ci(report.beta_hat, covariance.var_beta, level)
    return FitResult(spec=spec, coefficient_names=sample.coefficient_names, beta_hat=report.beta_hat,
                     beta_nonsmooth=nonsmooth.beta_hat, covariance=covariance, ci=ci, level=level,
                     report=report, n=sample.n)


def fit_csv(in_csv, spec, taus, t0s, level=0.95, intercept=True):
    """
    Fit the model at every (tau, t0) pair to a CSV dataset.

    Args:
        in_csv (path): CSV with header time,status,<covariates...>.
        spec (FitSpec): Base specification; tau and t0 are replaced per pair.
        taus (iterable of float): Quantile levels.
        t0s (iterable of float): Follow-up times.
        level (float): Confidence level.
        intercept (bool): Include an intercept.

    Returns:
        pd.DataFrame: concatenated FitResult.to_frame() rows.
    """
    sample = read_survival_csv(validate_file(in_csv, 'in_csv'), intercept=intercept)
    log.info(f'Read {sample.n} subjects with {sample.p} covariate(s) from {in_csv}')
    frames = []
    for tau, t0 in itertools.product(taus, t0s):
        start_time = dt.datetime.utcnow()
        result = fit_model(replace(spec, tau=tau, t0=t0), sample, level=level)
        log.info(f'tau = {tau}, t0 = {t0}: {result.report.n_events} events beyond t0, '
                 f'{result.report.iterations} iteration(s), fitted in '
                 f'{humanize.precisedelta(dt.datetime.utcnow() - start_time, minimum_unit="milliseconds")}')
        frames.append(result.to_frame())
    return pd.concat(frames, ignore_index=True)


def cmd_fit(args):
    log_level = logging.DEBUG if args.debug else logging.INFO
    setup_basic_logging(log_level)
    log.debug(f'Given arguments: {args}')
    try:
        spec = spec_from_args(args)
        table = fit_csv(args.in_csv, spec, args.tau, args.t0, level=args.level, intercept=not args.no_intercept)
    except RlqrError as e:
        log.error(f'{type(e).__name__}: {e}')
        return e.exit_code
    except ValueError as e:
        log.error(str(e))
        return EXIT_INPUT
    write_table(table, args.output, args.format, echoed_arguments(args))
    return EXIT_OK


def spec_from_args(args):
    """Build the base FitSpec from parsed fit/simulate/compare arguments."""
    return FitSpec(
        weighting=args.weighting,
        h_policy=args.h_policy,
        max_iter=args.max_iter,
        tol=args.tol,
        resample_m=args.resamples,
        seed=args.seed if args.seed is not None else FitSpec.seed,
        big_m=args.big_m,
        g_floor=args.g_floor,
        multiplier_law=args.multiplier_law,
        multiplier_keying=args.multiplier_keying,
    )


def add_fit_spec_arguments(parser, scenario_seed=False):
    """
    Flags shared by every command that fits models.

    Args:
        parser (argparse.ArgumentParser): Parser to add the flags to.
        scenario_seed (bool): The seed defaults to None so that a scenario file can supply it.
    """
    defaults = FitSpec()
    parser.add_argument("--weighting", choices=[w.value for w in Weighting], default=defaults.weighting.value,
                        help='IPCW scheme: "li" weights the indicator by G(t0)/G(Z); "kim" weights the whole '
                             'bracket by 1/G(Z). Defaults to "li".')
    parser.add_argument("--h-policy", dest="h_policy", choices=[h.value for h in HPolicy],
                        default=defaults.h_policy.value,
                        help='Smoothing matrix: "fixed" (H = I/n) or "iterative" (H = Sigma/n, updated). '
                             'Defaults to "fixed".')
    parser.add_argument("--resamples", type=validate_positive_int, default=defaults.resample_m,
                        help=f"Number of multiplier resamples for the score variance. "
                             f"Defaults to {defaults.resample_m}.")
    if scenario_seed:
        parser.add_argument("--seed", type=int, default=None,
                            help=f"Master random seed. Defaults to the seed of the --config file, or {defaults.seed}.")
    else:
        parser.add_argument("--seed", type=int, default=defaults.seed,
                            help=f"Master random seed. Defaults to {defaults.seed}.")
    parser.add_argument("--max-iter", dest="max_iter", type=validate_positive_int, default=defaults.max_iter,
                        help=f"Maximum solver iterations. Defaults to {defaults.max_iter}.")
    parser.add_argument("--tol", type=validate_positive_float, default=defaults.tol,
                        help=f"Convergence tolerance on the coefficient change. Defaults to {defaults.tol}.")
    parser.add_argument("--big-m", dest="big_m", type=validate_positive_float, default=defaults.big_m,
                        help=f"Pseudo-observation response of the L1 objective. Defaults to {defaults.big_m:g}.")
    parser.add_argument("--g-floor", dest="g_floor", type=validate_open_unit, default=defaults.g_floor,
                        help=f"Floor on the censoring survival in IPCW weights. Defaults to {defaults.g_floor:g}.")
    parser.add_argument("--multiplier-law", dest="multiplier_law", choices=MULTIPLIER_LAWS,
                        default=defaults.multiplier_law,
                        help='Law of the resampling multipliers. Defaults to "exponential".')
    parser.add_argument("--multiplier-keying", dest="multiplier_keying", choices=MULTIPLIER_KEYINGS,
                        default=defaults.multiplier_keying,
                        help='"subject" ties each multiplier draw to a subject rather than a row, so reordering the '
                             'rows leaves the standard errors unchanged. Defaults to "row".')


def add_output_arguments(parser):
    parser.add_argument("-o", "--output", default=None,
                        help="Path of the output file. Defaults to stdout.")
    parser.add_argument("-f", "--format", choices=OUTPUT_FORMATS, default='tsv',
                        help='Output format: "tsv" or "json". Defaults to "tsv".')
    parser.add_argument("-d", "--debug", dest="debug", action='store_true',
                        help="Turn on debug logging.")


def _add_fit_parser_arguments(parser):
    parser.add_argument("in_csv",
                        help="Path to a CSV file with header time,status,<covariate names...>.")
    parser.add_argument("--tau", type=validate_open_unit, nargs='+', default=[0.5],
                        help="One or more quantile levels in (0, 1). Defaults to 0.5.")
    parser.add_argument("--t0", type=validate_nonnegative_float, nargs='+', default=[0.0],
                        help="One or more follow-up times. Defaults to 0.")
    parser.add_argument("--level", type=validate_open_unit, default=0.95,
                        help="Confidence level of the Wald intervals. Defaults to 0.95.")
    parser.add_argument("--no-intercept", dest="no_intercept", action='store_true',
                        help="Fit without an intercept column.")
    add_fit_spec_arguments(parser)
    add_output_arguments(parser)
    parser.set_defaults(func=cmd_fit)


def _add_fit_parser(subparsers):
    p = subparsers.add_parser('fit', description=_COMMAND_DESCRIPTION, help="Fit a model to a CSV dataset.")
    _add_fit_parser_arguments(p)


if __name__ == '__main__':
    import argparse
    import sys
    parser = argparse.ArgumentParser(description=_COMMAND_DESCRIPTION)
    _add_fit_parser_arguments(parser)
    args = parser.parse_args()
    sys.exit(args.func(args))
