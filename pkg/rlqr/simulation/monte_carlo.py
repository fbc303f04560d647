"""
Monte Carlo evaluation of the smoothed estimator over replicated datasets from a SimScenario.
"""
from dataclasses import dataclass, replace
import datetime as dt
import logging
import multiprocessing as mp
import os
from pathlib import Path

import humanize
import numpy as np
import pandas as pd
from tqdm import tqdm

from rlqr.data import write_survival_csv
from rlqr.errors import EXIT_INPUT, EXIT_OK, RlqrError
from rlqr.fit import add_fit_spec_arguments, add_output_arguments, fit_model, spec_from_args
from rlqr.simulation.scenario import add_scenario_arguments, calibrate_censoring, generate_dataset, \
    scenario_from_args
from rlqr.solver import fit_nonsmooth, fit_smoothed, prepare_context
from rlqr.utils.logging import setup_basic_logging
from rlqr.utils.output import echoed_arguments, write_table
from rlqr.utils.random import FIT, derive_seed
from rlqr.utils.validation import validate_directory, validate_open_unit, validate_positive_int

_COMMAND_DESCRIPTION = "Run a Monte Carlo study of the smoothed estimator: generate Weibull datasets with " \
                       "calibrated uniform censoring, fit every follow-up time, and summarize bias, " \
                       "standard errors and coverage."
log = logging.getLogger(__name__)

# Cells with more failed replicates than this fraction are flagged instead of summarized
MAX_FAILED_FRACTION = 0.2

OK = 'ok'
FLAG_UNIDENTIFIABLE = 'unidentifiable'

SUMMARY_MODE = 'summary'
COMPARE_MODE = 'compare'


def default_processes():
    """Worker count from the RLQR_PROCESSES environment variable (1 when unset)."""
    value = os.environ.get('RLQR_PROCESSES', '1')
    try:
        processes = int(value)
    except ValueError:
        raise ValueError(f'RLQR_PROCESSES must be a positive integer, got "{value}".')
    if processes < 1:
        raise ValueError(f'RLQR_PROCESSES must be a positive integer, got "{value}".')
    return processes


@dataclass(frozen=True)
class SimSummary:
    """
    Result of a Monte Carlo run.

    Attributes:
        scenario (SimScenario): The scenario.
        censor_bound (float): Calibrated censoring bound c (infinity without censoring).
        records (pd.DataFrame): One row per (replicate, t0, coefficient), sorted by replicate then t0.
        table (pd.DataFrame): One row per (t0, coefficient) with columns t0, cens, coef, truth, PE, ESE, SD,
            CP, n_used, n_failed, mean_n_effective, mean_n_events, observed_cens, flag.
    """
    scenario: object
    censor_bound: float
    records: pd.DataFrame
    table: pd.DataFrame


def run_replicate(task):
    """
    Generate one replicate and fit it at every follow-up time. Failures are recorded by error class name
        instead of raised.

    Args:
        task (dict): scenario, spec, censor_bound, replicate, level, mode and emit_directory.

    Returns:
        list of dict: one record per (t0, coefficient).
    """
    scenario = task['scenario']
    replicate = task['replicate']
    sample = generate_dataset(scenario, replicate, c=task['censor_bound'])
    if task.get('emit_directory') is not None:
        write_survival_csv(sample, Path(task['emit_directory']) / f'replicate-{replicate:05d}.csv')
    observed_cens = 1.0 - float(np.mean(sample.status))

    records = []
    for t0_index, t0 in enumerate(scenario.t0_list):
        seed = derive_seed(scenario.seed, FIT, replicate, t0_index)
        spec = replace(task['spec'], tau=scenario.tau, t0=t0, seed=seed)
        truth = scenario.truth(t0)
        base = {'replicate': replicate, 't0_index': t0_index, 't0': t0, 'observed_cens': observed_cens}
        try:
            if task['mode'] == COMPARE_MODE:
                values = _fit_pair(spec, sample)
            else:
                values = _fit_summary(spec, sample, task['level'])
            status = OK
        except RlqrError as e:
            log.debug(f'Replicate {replicate}, t0 = {t0}: {type(e).__name__}: {e}')
            values, status = None, type(e).__name__

        for j, name in enumerate(sample.coefficient_names):
            record = dict(base, coef=name, coef_index=j, truth=truth[j], status=status)
            if values is None:
                record.update({key: np.nan for key in _value_columns(task['mode'])})
            else:
                record.update({key: value[j] if np.ndim(value) else value for key, value in values.items()})
            records.append(record)
    return records


def _fit_summary(spec, sample, level):
    result = fit_model(spec, sample, level=level)
    return {
        'estimate': result.beta_hat,
        'se': result.se,
        'lower': result.ci[:, 0],
        'upper': result.ci[:, 1],
        'nonsmooth': result.beta_nonsmooth,
        'n_effective': result.report.n_effective,
        'n_events': result.report.n_events,
        'iterations': result.report.iterations,
    }


def _fit_pair(spec, sample):
    ctx = prepare_context(spec, sample)
    nonsmooth = fit_nonsmooth(spec, sample, ctx=ctx)
    smoothed = fit_smoothed(spec, sample, init=nonsmooth.beta_hat, ctx=ctx)
    return {
        'nonsmooth': nonsmooth.beta_hat,
        'smoothed': smoothed.beta_hat,
        'n_effective': smoothed.n_effective,
        'n_events': smoothed.n_events,
    }


def _value_columns(mode):
    if mode == COMPARE_MODE:
        return ['nonsmooth', 'smoothed', 'n_effective', 'n_events']
    return ['estimate', 'se', 'lower', 'upper', 'nonsmooth', 'n_effective', 'n_events', 'iterations']


def collect_records(scenario, spec, mode=SUMMARY_MODE, processes=1, level=0.95, emit_directory=None,
                    progress=True):
    """
    Run every replicate of the scenario and gather the per-fit records.

    Returns:
        tuple: (censor_bound, records DataFrame sorted by replicate, t0 and coefficient).
    """
    censor_bound = calibrate_censoring(scenario)
    log.info(f'Censoring bound c = {censor_bound:.6g} for a target censoring proportion of '
             f'{scenario.censor_target}')
    if emit_directory is not None:
        emit_directory = str(validate_directory(emit_directory, 'emit_directory', create=True))

    tasks = [{
        'scenario': scenario,
        'spec': spec,
        'censor_bound': censor_bound,
        'replicate': replicate,
        'level': level,
        'mode': mode,
        'emit_directory': emit_directory,
    } for replicate in range(scenario.reps)]
    log.debug(f'Num tasks: {len(tasks)}')

    start_time = dt.datetime.utcnow()
    records = []
    if processes > 1:
        with mp.Pool(processes=processes) as p:
            for result in tqdm(p.imap(run_replicate, tasks), total=len(tasks), disable=not progress):
                records.extend(result)
    else:
        for task in tqdm(tasks, disable=not progress):
            records.extend(run_replicate(task))

    time_taken = dt.datetime.utcnow() - start_time
    log.info(f'Fitted {len(tasks)} replicates at {len(scenario.t0_list)} follow-up time(s) in '
             f'{humanize.precisedelta(time_taken)} using {processes} process(es).')

    frame = pd.DataFrame.from_records(records)
    frame = frame.sort_values(['replicate', 't0_index', 'coef_index'], kind='mergesort').reset_index(drop=True)
    return censor_bound, frame


def summarize(records, scenario):
    """
    Aggregate per-fit records into one row per (t0, coefficient).

    SD is NaN with fewer than two successful replicates. Cells where more than MAX_FAILED_FRACTION of the
        replicates failed are flagged and their summaries left missing.
    """
    rows = []
    for (t0_index, coef_index), group in records.groupby(['t0_index', 'coef_index'], sort=True):
        used = group[group['status'] == OK]
        n_used = len(used)
        n_failed = len(group) - n_used
        flagged = n_failed > MAX_FAILED_FRACTION * scenario.reps or n_used == 0
        row = {
            't0': scenario.t0_list[t0_index],
            'cens': scenario.censor_target,
            'coef': group['coef'].iloc[0],
            'truth': group['truth'].iloc[0],
            'PE': np.nan,
            'ESE': np.nan,
            'SD': np.nan,
            'CP': np.nan,
            'n_used': n_used,
            'n_failed': n_failed,
            'mean_n_effective': used['n_effective'].mean() if n_used else np.nan,
            'mean_n_events': used['n_events'].mean() if n_used else np.nan,
            'observed_cens': group['observed_cens'].mean(),
            'flag': FLAG_UNIDENTIFIABLE if flagged else OK,
        }
        if not flagged:
            covered = (used['lower'] <= used['truth']) & (used['truth'] <= used['upper'])
            row.update({
                'PE': used['estimate'].mean(),
                'ESE': used['se'].mean(),
                'SD': used['estimate'].std(ddof=1) if n_used >= 2 else np.nan,
                'CP': covered.mean(),
            })
        else:
            log.warning(f't0 = {row["t0"]}, {row["coef"]}: {n_failed} of {len(group)} replicates failed; '
                        f'cell flagged {FLAG_UNIDENTIFIABLE}.')
        rows.append(row)
    return pd.DataFrame(rows)


def run_monte_carlo(scenario, spec, processes=1, level=0.95, emit_directory=None, progress=True):
    """
    Monte Carlo study of the smoothed estimator.

    Replicate k's data and fit seeds depend only on (scenario.seed, k), so the first R replicates of a run
        with 2R replicates are bit-identical to a run with R replicates, for any number of processes.

    Args:
        scenario (SimScenario): Data-generating scenario.
        spec (FitSpec): Fit options; tau, t0 and seed are set per replicate and follow-up time.
        processes (int): Worker processes.
        level (float): Confidence level for coverage.
        emit_directory (path): Also write every generated dataset as CSV into this directory.
        progress (bool): Show a progress bar.

    Returns:
        SimSummary: the records and the summary table.
    """
    censor_bound, records = collect_records(scenario, spec, SUMMARY_MODE, processes, level, emit_directory,
                                            progress)
    return SimSummary(scenario=scenario, censor_bound=censor_bound, records=records,
                      table=summarize(records, scenario))


def cmd_simulate(args):
    log_level = logging.DEBUG if args.debug else logging.INFO
    setup_basic_logging(log_level)
    log.debug(f'Given arguments: {args}')
    try:
        scenario = scenario_from_args(args)
        spec = spec_from_args(args)
        processes = args.processes if args.processes is not None else default_processes()
        summary = run_monte_carlo(scenario, spec, processes=processes, level=args.level,
                                  emit_directory=args.emit_data, progress=not args.no_progress)
    except RlqrError as e:
        log.error(f'{type(e).__name__}: {e}')
        return e.exit_code
    except ValueError as e:
        log.error(str(e))
        return EXIT_INPUT
    arguments = echoed_arguments(args)
    arguments.update({f'scenario.{key}': value for key, value in scenario.as_dict().items()})
    arguments['scenario.t0_list'] = list(scenario.t0_list)
    write_table(summary.table, args.output, args.format, arguments)
    return EXIT_OK


def add_run_arguments(parser):
    """Flags shared by simulate and compare."""
    add_scenario_arguments(parser)
    add_fit_spec_arguments(parser, scenario_seed=True)
    parser.add_argument("-p", "--processes", type=validate_positive_int, default=None,
                        help="Number of worker processes. Defaults to RLQR_PROCESSES or 1.")
    parser.add_argument("--no-progress", dest="no_progress", action='store_true',
                        help="Hide the progress bar.")
    add_output_arguments(parser)


def _add_simulate_parser_arguments(parser):
    add_run_arguments(parser)
    parser.add_argument("--level", type=validate_open_unit, default=0.95,
                        help="Confidence level for coverage. Defaults to 0.95.")
    parser.add_argument("--emit-data", dest="emit_data", default=None,
                        help="Directory to write every generated dataset to as CSV.")
    parser.set_defaults(func=cmd_simulate)


def _add_simulate_parser(subparsers):
    p = subparsers.add_parser('simulate', description=_COMMAND_DESCRIPTION,
                              help="Run a Monte Carlo study of the smoothed estimator.")
    _add_simulate_parser_arguments(p)


if __name__ == '__main__':
    import argparse
    import sys
    parser = argparse.ArgumentParser(description=_COMMAND_DESCRIPTION)
    _add_simulate_parser_arguments(parser)
    args = parser.parse_args()
    sys.exit(args.func(args))
