"""
Survival data representations, fit configuration, validation, and the effective (at-risk) sample at a
follow-up time.
"""
from dataclasses import dataclass, field, fields
import enum
from functools import cached_property
import logging

import numpy as np
import pandas as pd

from rlqr.errors import (CsvFormatError, DimensionMismatch, EmptyRiskSet, InvalidFitSpec, NoEvents,
                         NonFiniteValue, NonPositiveTime, InputError)
from rlqr.utils.random import MULTIPLIER_KEYINGS, MULTIPLIER_LAWS

log = logging.getLogger(__name__)

INTERCEPT_NAME = "(Intercept)"


class Weighting(str, enum.Enum):
    """Position of the IPCW in the estimating function."""
    LI = "li"     # weight on the indicator only, relative to G(t0)
    KIM = "kim"   # weight on the whole bracket, absolute


class HPolicy(str, enum.Enum):
    """How the smoothing matrix H is chosen."""
    FIXED_IDENTITY = "fixed"
    ITERATIVE = "iterative"


@dataclass(frozen=True)
class Subject:
    """
    One observed subject.

    Args:
        time (float): Observed time Z = min(T, C).
        status (int): 1 if the event was observed, 0 if censored.
        covariates (tuple of float): Covariate values, intercept excluded.
    """
    time: float
    status: int
    covariates: tuple = ()


@dataclass(frozen=True)
class SurvivalSample:
    """
    An ordered collection of subjects. Input order is preserved by every operation.

    Array views (time, status, covariates, design_matrix) are computed on first access and cached; they
    are read-only.
    """
    subjects: tuple
    intercept: bool = True
    covariate_names: tuple = ()

    @classmethod
    def from_arrays(cls, time, status, covariates=None, intercept=True, covariate_names=None):
        """
        Build a sample from column arrays.

        Args:
            time (array-like): Observed times, length n.
            status (array-like): Event indicators, length n.
            covariates (array-like): n x p covariate matrix (or length n vector for p = 1). None for p = 0.
            intercept (bool): Prepend a column of ones to the design matrix.
            covariate_names (iterable of str): Labels for the p covariates. Defaults to x1..xp.

        Returns:
            SurvivalSample: the (unvalidated) sample.
        """
        time = np.asarray(time, dtype=float).ravel()
        status = np.asarray(status).ravel()
        n = time.shape[0]
        if covariates is None:
            covariates = np.empty((n, 0))
        covariates = np.asarray(covariates, dtype=float)
        if covariates.ndim == 1:
            covariates = covariates.reshape(n, 1)
        if status.shape[0] != n or covariates.shape[0] != n:
            raise DimensionMismatch(f'time, status and covariates must have the same length '
                                    f'({n}, {status.shape[0]}, {covariates.shape[0]}).')
        p = covariates.shape[1]
        if covariate_names is None:
            covariate_names = tuple(f'x{j + 1}' for j in range(p))
        subjects = tuple(
            Subject(float(t), int(s), tuple(float(v) for v in row))
            for t, s, row in zip(time, status, covariates)
        )
        sample = cls(subjects=subjects, intercept=intercept, covariate_names=tuple(covariate_names))
        # Pre-fill the array caches so generated samples skip the per-subject rebuild
        sample.__dict__['time'] = _read_only(time.copy())
        sample.__dict__['status'] = _read_only(status.astype(int))
        sample.__dict__['covariates'] = _read_only(covariates.copy())
        return sample

    @property
    def n(self):
        return len(self.subjects)

    @property
    def p(self):
        return self.covariates.shape[1]

    @cached_property
    def time(self):
        return _read_only(np.array([s.time for s in self.subjects], dtype=float))

    @cached_property
    def status(self):
        return _read_only(np.array([s.status for s in self.subjects], dtype=int))

    @cached_property
    def covariates(self):
        dims = {len(s.covariates) for s in self.subjects}
        if len(dims) > 1:
            raise DimensionMismatch(f'Subjects have differing covariate dimensions: {sorted(dims)}.')
        p = dims.pop() if dims else len(self.covariate_names)
        values = np.array([s.covariates for s in self.subjects], dtype=float).reshape(self.n, p)
        return _read_only(values)

    @cached_property
    def design_matrix(self):
        """np.ndarray: n x (p + 1) matrix with a leading column of ones when intercept is set."""
        if self.intercept:
            return _read_only(np.column_stack([np.ones(self.n), self.covariates]))
        return self.covariates

    @property
    def coefficient_names(self):
        names = tuple(self.covariate_names)
        return ((INTERCEPT_NAME,) + names) if self.intercept else names

    @cached_property
    def subject_ranks(self):
        """np.ndarray: position of each subject when sorted by time, then status, then covariates."""
        keys = [self.covariates[:, j] for j in reversed(range(self.p))] + [self.status, self.time]
        order = np.lexsort(keys)
        ranks = np.empty(self.n, dtype=int)
        ranks[order] = np.arange(self.n)
        return _read_only(ranks)

    def replicate(self, times=2):
        """Return a sample with every subject repeated ``times`` times, in blocks."""
        return SurvivalSample(subjects=self.subjects * times, intercept=self.intercept,
                              covariate_names=self.covariate_names)


def _read_only(array):
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class FitSpec:
    """
    Fit configuration.

    Attributes:
        tau (float): Quantile level in (0, 1).
        t0 (float): Follow-up time, >= 0, in the units of the observed times.
        weighting (Weighting): IPCW scheme.
        h_policy (HPolicy): Fixed H = I/n or the iterative H = Sigma/n update.
        max_iter (int): Iteration budget for Newton and the iterative algorithm.
        tol (float): Convergence tolerance on the max-abs coefficient change.
        resample_m (int): Number of multiplier resamples for the score variance.
        seed (int): Master seed (unsigned 64-bit) for the multipliers.
        big_m (float): Pseudo-observation response in the L1 objective.
        g_floor (float): Floor on the censoring survival in IPCW denominators.
        sigma_tol (float): Convergence tolerance on the max-abs covariance change (iterative policy).
        multiplier_law (str): Law of the resampling multipliers.
        multiplier_keying (str): "row" assigns multiplier draws by row position; "subject" assigns them in
            the sorted subject order so the resampled variance does not depend on the row order.
    """
    tau: float = 0.5
    t0: float = 0.0
    weighting: Weighting = Weighting.LI
    h_policy: HPolicy = HPolicy.FIXED_IDENTITY
    max_iter: int = 100
    tol: float = 1e-8
    resample_m: int = 200
    seed: int = 0
    big_m: float = 1e6
    g_floor: float = 1e-10
    sigma_tol: float = 1e-6
    multiplier_law: str = field(default="exponential")
    multiplier_keying: str = "row"

    def __post_init__(self):
        try:
            object.__setattr__(self, 'weighting', Weighting(self.weighting))
            object.__setattr__(self, 'h_policy', HPolicy(self.h_policy))
        except ValueError as e:
            raise InvalidFitSpec(str(e))
        checks = [
            (0.0 < self.tau < 1.0, '"tau" must lie strictly between 0 and 1.'),
            (np.isfinite(self.t0) and self.t0 >= 0.0, '"t0" must be a finite number >= 0.'),
            (int(self.max_iter) >= 1, '"max_iter" must be >= 1.'),
            (self.tol > 0.0, '"tol" must be > 0.'),
            (int(self.resample_m) >= 2, '"resample_m" must be >= 2.'),
            (0 <= int(self.seed) < 2 ** 64, '"seed" must be an unsigned 64-bit integer.'),
            (self.big_m > 0.0, '"big_m" must be > 0.'),
            (0.0 < self.g_floor < 1.0, '"g_floor" must lie strictly between 0 and 1.'),
            (self.sigma_tol > 0.0, '"sigma_tol" must be > 0.'),
            (self.multiplier_law in MULTIPLIER_LAWS,
             f'"multiplier_law" must be one of {", ".join(MULTIPLIER_LAWS)}.'),
            (self.multiplier_keying in MULTIPLIER_KEYINGS,
             f'"multiplier_keying" must be one of {", ".join(MULTIPLIER_KEYINGS)}.'),
        ]
        for ok, message in checks:
            if not ok:
                raise InvalidFitSpec(message)

    def as_dict(self):
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            out[f.name] = value.value if isinstance(value, enum.Enum) else value
        return out


def validate_sample(sample):
    """
    Check every invariant of a survival sample.

    Args:
        sample (SurvivalSample): The sample to check.

    Returns:
        SurvivalSample: the same sample, unchanged.

    Raises:
        DimensionMismatch: ragged covariate rows or mislabelled covariates.
        NonFiniteValue: NaN or infinite time or covariate.
        NonPositiveTime: a time <= 0.
        InputError: a status outside {0, 1}.
        NoEvents: no subject has status 1.
    """
    covariates = sample.covariates
    if sample.covariate_names and len(sample.covariate_names) != covariates.shape[1]:
        raise DimensionMismatch(f'{len(sample.covariate_names)} covariate names given for '
                                f'{covariates.shape[1]} covariates.')
    time = sample.time
    if not np.all(np.isfinite(time)):
        bad = int(np.flatnonzero(~np.isfinite(time))[0])
        raise NonFiniteValue(f'Subject {bad} has a non-finite time.', subject=bad)
    if not np.all(np.isfinite(covariates)):
        bad = int(np.flatnonzero(~np.all(np.isfinite(covariates), axis=1))[0])
        raise NonFiniteValue(f'Subject {bad} has a non-finite covariate.', subject=bad)
    if np.any(time <= 0.0):
        bad = int(np.flatnonzero(time <= 0.0)[0])
        raise NonPositiveTime(f'Subject {bad} has time {time[bad]} <= 0.', subject=bad)
    status = sample.status
    if not np.all((status == 0) | (status == 1)):
        bad = int(np.flatnonzero((status != 0) & (status != 1))[0])
        raise InputError(f'Subject {bad} has status {status[bad]}; status must be 0 or 1.', subject=bad)
    if not np.any(status == 1):
        raise NoEvents('No subject has an observed event (all status = 0).')
    return sample


def effective_indices(sample, t0):
    """
    Indices of subjects still at risk strictly after t0, in input order.

    Args:
        sample (SurvivalSample): A validated sample.
        t0 (float): Follow-up time.

    Returns:
        np.ndarray: integer indices i with Z_i > t0.

    Raises:
        EmptyRiskSet: no observed time exceeds t0.
    """
    indices = np.flatnonzero(sample.time > t0)
    if indices.size == 0:
        raise EmptyRiskSet(f'No subject is at risk beyond t0 = {t0} (max time {sample.time.max()}).')
    return indices


def read_survival_csv(path, intercept=True):
    """
    Read a survival dataset from CSV. The header must start with "time,status" followed by covariate
        names. Missing or non-numeric values are errors reported with their line number.

    Args:
        path (str or pathlib.Path): CSV file.
        intercept (bool): Prepend an intercept column to the design matrix.

    Returns:
        SurvivalSample: the validated sample.
    """
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding='utf-8',
                            skipinitialspace=True)
    except pd.errors.EmptyDataError:
        raise CsvFormatError('File is empty; expected a header "time,status,<covariates...>".', line=1)
    except pd.errors.ParserError as e:
        raise CsvFormatError(f'Could not parse CSV: {e}')

    columns = [c.strip() for c in frame.columns]
    if columns[:2] != ['time', 'status']:
        raise CsvFormatError(f'Header must start with "time,status"; found "{",".join(columns[:2])}".', line=1)
    frame.columns = columns
    if frame.empty:
        raise CsvFormatError('No data rows.', line=2)

    numeric = pd.DataFrame(index=frame.index)
    for column in columns:
        raw = frame[column].str.strip()
        values = pd.to_numeric(raw, errors='coerce')
        bad = raw.eq('') | values.isna()
        if bad.any():
            row = int(np.flatnonzero(bad.to_numpy())[0])
            what = 'missing value' if raw.iloc[row] == '' else f'non-numeric value "{raw.iloc[row]}"'
            raise CsvFormatError(f'{what} in column "{column}"', line=_line_number(frame, row))
        numeric[column] = values

    status = numeric['status'].to_numpy()
    if not np.all(np.isin(status, (0, 1))):
        row = int(np.flatnonzero(~np.isin(status, (0, 1)))[0])
        raise CsvFormatError(f'status must be 0 or 1, found {status[row]}', line=_line_number(frame, row))

    sample = SurvivalSample.from_arrays(
        time=numeric['time'].to_numpy(),
        status=status.astype(int),
        covariates=numeric[columns[2:]].to_numpy(dtype=float),
        intercept=intercept,
        covariate_names=columns[2:],
    )
    try:
        return validate_sample(sample)
    except InputError as e:
        line = _line_number(frame, e.subject) if e.subject is not None else None
        raise CsvFormatError(str(e), line=line)


def _line_number(frame, row):
    # Header is line 1
    return int(frame.index[row]) + 2


def write_survival_csv(sample, path):
    """
    Write a sample in the CSV layout read by read_survival_csv.

    Args:
        sample (SurvivalSample): The sample.
        path (str or pathlib.Path): Output file.
    """
    frame = pd.DataFrame({'time': sample.time, 'status': sample.status})
    for j, name in enumerate(sample.covariate_names):
        frame[name] = sample.covariates[:, j]
    frame.to_csv(path, index=False)
    log.debug(f'Wrote {sample.n} subjects to {path}')
