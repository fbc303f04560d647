"""
Side-by-side comparison of the non-smooth and smoothed estimators on the same replicated datasets.
"""
import logging

import numpy as np
import pandas as pd

from rlqr.errors import EXIT_INPUT, EXIT_OK, RlqrError
from rlqr.fit import spec_from_args
from rlqr.simulation.monte_carlo import (COMPARE_MODE, FLAG_UNIDENTIFIABLE, MAX_FAILED_FRACTION, OK, add_run_arguments,
                                         collect_records, default_processes)
from rlqr.simulation.scenario import scenario_from_args
from rlqr.utils.logging import setup_basic_logging
from rlqr.utils.output import echoed_arguments, write_table

_COMMAND_DESCRIPTION = "Fit the non-smooth and the smoothed estimator to the same simulated datasets and " \
                       "report the per-replicate pairs, plus a per-method summary of their spread."
log = logging.getLogger(__name__)

PAIR_COLUMNS = ['replicate', 't0', 'coef', 'truth', 'nonsmooth', 'smoothed']


def compare_estimators(scenario, spec, processes=1, progress=True):
    """
    Fit both estimators to every replicate of a scenario.

    Args:
        scenario (SimScenario): Data-generating scenario.
        spec (FitSpec): Fit options; tau, t0 and seed are set per replicate and follow-up time.
        processes (int): Worker processes.
        progress (bool): Show a progress bar.

    Returns:
        tuple: (pairs, summary) DataFrames. ``pairs`` holds one row per successful (replicate, t0, coefficient);
            ``summary`` one row per (t0, coefficient).
    """
    _, records = collect_records(scenario, spec, COMPARE_MODE, processes=processes, progress=progress)
    pairs = records[records['status'] == OK]
    summary = summarize_pairs(records)
    return pairs[PAIR_COLUMNS].reset_index(drop=True), summary


def summarize_pairs(records):
    """
    Per-method mean and standard deviation, their SD ratio (smoothed over non-smooth), the correlation of the
        two estimators, and the least-squares slope of smoothed on non-smooth estimates.

    ``records`` may carry a ``status`` column; rows whose status is not OK count as failed replicates. Cells
        where more than MAX_FAILED_FRACTION of the replicates failed are flagged, as in the Monte Carlo summary,
        but keep their statistics over the pairs that did succeed.
    """
    if 'status' not in records.columns:
        records = records.assign(status=OK)
    rows = []
    for (t0_index, coef_index), group in records.groupby(['t0_index', 'coef_index'], sort=True):
        used = group[group['status'] == OK]
        n_failed = len(group) - len(used)
        flagged = n_failed > MAX_FAILED_FRACTION * len(group) or used.empty
        ns = used['nonsmooth'].to_numpy(dtype=float)
        smooth = used['smoothed'].to_numpy(dtype=float)
        enough = len(used) >= 2
        sd_ns = np.std(ns, ddof=1) if enough else np.nan
        sd_is = np.std(smooth, ddof=1) if enough else np.nan
        varies = enough and sd_ns > 0.0 and sd_is > 0.0
        row = {
            't0': group['t0'].iloc[0],
            'coef': group['coef'].iloc[0],
            'truth': group['truth'].iloc[0],
            'n_pairs': len(used),
            'n_failed': n_failed,
            'mean_NS': ns.mean() if len(used) else np.nan,
            'SD_NS': sd_ns,
            'mean_IS': smooth.mean() if len(used) else np.nan,
            'SD_IS': sd_is,
            'SD_ratio': sd_is / sd_ns if varies else np.nan,
            'correlation': np.corrcoef(ns, smooth)[0, 1] if varies else np.nan,
            'slope': np.polyfit(ns, smooth, 1)[0] if varies else np.nan,
            'flag': FLAG_UNIDENTIFIABLE if flagged else OK,
        }
        if flagged:
            log.warning(f't0 = {row["t0"]}, {row["coef"]}: {n_failed} of {len(group)} replicates failed; '
                        f'cell flagged {FLAG_UNIDENTIFIABLE}.')
        rows.append(row)
    return pd.DataFrame(rows)


def cmd_compare(args):
    log_level = logging.DEBUG if args.debug else logging.INFO
    setup_basic_logging(log_level)
    log.debug(f'Given arguments: {args}')
    try:
        scenario = scenario_from_args(args)
        spec = spec_from_args(args)
        processes = args.processes if args.processes is not None else default_processes()
        pairs, summary = compare_estimators(scenario, spec, processes=processes, progress=not args.no_progress)
    except RlqrError as e:
        log.error(f'{type(e).__name__}: {e}')
        return e.exit_code
    except ValueError as e:
        log.error(str(e))
        return EXIT_INPUT

    arguments = echoed_arguments(args)
    arguments.update({f'scenario.{key}': value for key, value in scenario.as_dict().items()})
    arguments['scenario.t0_list'] = list(scenario.t0_list)
    write_table(pairs, args.output, args.format, arguments)
    if args.summary_output:
        write_table(summary, args.summary_output, args.format, arguments)
    else:
        for row in summary.itertuples(index=False):
            log.info(f't0 = {row.t0}, {row.coef}: SD NS = {row.SD_NS:.4f}, SD IS = {row.SD_IS:.4f}, '
                     f'ratio = {row.SD_ratio:.3f}, correlation = {row.correlation:.4f}, slope = {row.slope:.4f}')
    return EXIT_OK


def _add_compare_parser_arguments(parser):
    add_run_arguments(parser)
    parser.add_argument("--summary-output", dest="summary_output", default=None,
                        help="Path to write the per-method summary to. Logged when omitted.")
    parser.set_defaults(func=cmd_compare)


def _add_compare_parser(subparsers):
    p = subparsers.add_parser('compare', description=_COMMAND_DESCRIPTION,
                              help="Compare the non-smooth and smoothed estimators on simulated data.")
    _add_compare_parser_arguments(p)


if __name__ == '__main__':
    import argparse
    import sys
    parser = argparse.ArgumentParser(description=_COMMAND_DESCRIPTION)
    _add_compare_parser_arguments(parser)
    args = parser.parse_args()
    sys.exit(args.func(args))
