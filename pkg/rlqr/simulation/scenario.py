"""
Simulation scenarios: Weibull event times with a binary or uniform covariate, uniform censoring calibrated
to a target censoring proportion, and the true residual-life quantile coefficients at each follow-up time.
"""
from dataclasses import dataclass, fields
import logging
import math

import numpy as np
from scipy.integrate import quad
from scipy.optimize import bisect
import yaml

from rlqr.data import SurvivalSample
from rlqr.errors import InvalidScenario, NonPositiveResidualQuantile, TargetUnreachable
from rlqr.utils.random import CENSOR_TIME, COVARIATE, EVENT_TIME, stream

log = logging.getLogger(__name__)

COVARIATE_LAWS = ('bernoulli', 'uniform')

# Censoring bound meaning "no censoring"
NO_CENSORING = math.inf

# Gauss-Legendre nodes for averaging over a Uniform(0, 1) covariate
_LEGENDRE_NODES, _LEGENDRE_WEIGHTS = np.polynomial.legendre.leggauss(64)


@dataclass(frozen=True)
class SimScenario:
    """
    Data-generating configuration.

    Attributes:
        n (int): Sample size.
        tau (float): Quantile level.
        t0_list (tuple of float): Follow-up times fitted on every replicate.
        kappa (float): Weibull exponent in S(t) = exp(-(rho t)^kappa).
        beta0_base (float): Log tau-quantile of T for x = 0 (intercept at t0 = 0).
        beta1_base (float): Covariate effect at t0 = 0.
        censor_target (float): Target censoring proportion in [0, 0.95].
        covariate_law (str): "bernoulli" (success probability 0.5) or "uniform" on (0, 1).
        reps (int): Monte Carlo replications.
        seed (int): Master seed.
    """
    n: int = 200
    tau: float = 0.5
    t0_list: tuple = (0.0, 1.0, 2.0, 3.0)
    kappa: float = 2.0
    beta0_base: float = math.log(5.0)
    beta1_base: float = 0.0
    censor_target: float = 0.0
    covariate_law: str = 'bernoulli'
    reps: int = 500
    seed: int = 0

    def __post_init__(self):
        t0_list = self.t0_list
        if isinstance(t0_list, (int, float)):
            t0_list = (t0_list,)
        object.__setattr__(self, 't0_list', tuple(float(t) for t in t0_list))
        checks = [
            (int(self.n) >= 1, '"n" must be >= 1.'),
            (0.0 < self.tau < 1.0, '"tau" must lie strictly between 0 and 1.'),
            (len(self.t0_list) >= 1 and all(t >= 0.0 and math.isfinite(t) for t in self.t0_list),
             '"t0_list" must hold one or more finite follow-up times >= 0.'),
            (self.kappa > 0.0, '"kappa" must be > 0.'),
            (math.isfinite(self.beta0_base) and math.isfinite(self.beta1_base),
             '"beta0_base" and "beta1_base" must be finite.'),
            (0.0 <= self.censor_target <= 0.95, '"censor_target" must lie in [0, 0.95].'),
            (self.covariate_law in COVARIATE_LAWS, f'"covariate_law" must be one of {", ".join(COVARIATE_LAWS)}.'),
            (int(self.reps) >= 1, '"reps" must be >= 1.'),
            (0 <= int(self.seed) < 2 ** 64, '"seed" must be an unsigned 64-bit integer.'),
        ]
        for ok, message in checks:
            if not ok:
                raise InvalidScenario(message)

    @classmethod
    def from_mapping(cls, mapping):
        """
        Build a scenario from a flat mapping whose keys are field names.

        Raises:
            InvalidScenario: unknown keys or invalid values.
        """
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(mapping) - known)
        if unknown:
            raise InvalidScenario(f'Unknown scenario key(s): {", ".join(unknown)}. '
                                  f'Valid keys: {", ".join(sorted(known))}.')
        try:
            return cls(**mapping)
        except TypeError as e:
            raise InvalidScenario(str(e))

    @classmethod
    def from_yaml(cls, path):
        """Read a flat key-value YAML scenario file."""
        with open(path, encoding='utf-8') as f:
            mapping = yaml.safe_load(f) or {}
        if not isinstance(mapping, dict):
            raise InvalidScenario(f'Scenario file {path} must contain a flat key-value mapping.')
        return cls.from_mapping(mapping)

    def as_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def rate(self, x):
        """Weibull rate rho(x) placing the tau-quantile of T at exp(beta0_base + beta1_base x)."""
        return solve_weibull_rate(self.tau, self.kappa, self.beta0_base + self.beta1_base * np.asarray(x))

    @property
    def rho0(self):
        return float(self.rate(0.0))

    @property
    def rho1(self):
        return float(self.rate(1.0))

    def truth(self, t0):
        """np.ndarray: true (intercept, slope) at follow-up time t0."""
        return np.array(true_coefficients(self.tau, self.kappa, self.rho0, self.rho1, t0))

    def event_survival(self, u):
        """Marginal survival P(T > u) of the event time, averaged over the covariate law."""
        u = np.asarray(u, dtype=float)
        if self.covariate_law == 'bernoulli':
            return 0.5 * np.exp(-(self.rho0 * u) ** self.kappa) + 0.5 * np.exp(-(self.rho1 * u) ** self.kappa)
        x = (_LEGENDRE_NODES + 1.0) / 2.0
        rates = self.rate(x)
        return float(np.sum(_LEGENDRE_WEIGHTS * np.exp(-(rates * u) ** self.kappa)) / 2.0)


def solve_weibull_rate(tau, kappa, target_quantile_log):
    """
    Rate rho of S(t) = exp(-(rho t)^kappa) whose tau-quantile is exp(target_quantile_log).

    Args:
        tau (float): Quantile level in (0, 1).
        kappa (float): Weibull exponent > 0.
        target_quantile_log (float or np.ndarray): Log of the target quantile.

    Returns:
        float or np.ndarray: rho.
    """
    return (-math.log(1.0 - tau)) ** (1.0 / kappa) / np.exp(target_quantile_log)


def true_coefficients(tau, kappa, rho0, rho1, t0):
    """
    True residual-life quantile coefficients at t0 for the two-rate Weibull design.

    The tau-quantile of T - t0 given T >= t0 under rate rho is
        rho^-1 {(rho t0)^kappa - log(1 - tau)}^(1/kappa) - t0.
    The intercept is its log under rho0; the slope is the log under rho1 minus the intercept.

    Returns:
        tuple of float: (beta0, beta1).

    Raises:
        NonPositiveResidualQuantile: a residual quantile is not positive.
    """
    def log_residual_quantile(rho):
        q = ((rho * t0) ** kappa - math.log(1.0 - tau)) ** (1.0 / kappa) / rho - t0
        if not q > 0.0:
            raise NonPositiveResidualQuantile(f'Residual quantile {q} <= 0 at t0 = {t0} (rho = {rho}).')
        return math.log(q)

    beta0 = log_residual_quantile(rho0)
    beta1 = log_residual_quantile(rho1) - beta0
    return beta0, beta1


def censoring_proportion(scenario, c):
    """P(C < T) for C ~ Uniform(0, c): the average of the event survival over (0, c)."""
    if math.isinf(c):
        return 0.0
    integral, _ = quad(scenario.event_survival, 0.0, c, epsabs=1e-8, limit=200)
    return integral / c


def calibrate_censoring(scenario):
    """
    Upper bound c of the uniform censoring distribution giving the scenario's censoring proportion.

    Args:
        scenario (SimScenario): The scenario.

    Returns:
        float: c, or NO_CENSORING (infinity) when the target is 0.

    Raises:
        TargetUnreachable: no bracket for the root could be found.
    """
    target = scenario.censor_target
    if target == 0.0:
        return NO_CENSORING

    def excess(c):
        return censoring_proportion(scenario, c) - target

    lo = 1e-8 / max(scenario.rho0, scenario.rho1)
    hi = 1.0 / min(scenario.rho0, scenario.rho1)
    if excess(lo) <= 0.0:
        raise TargetUnreachable(f'Censoring proportion {target} is not reachable for any c > {lo:g}.')
    doublings = 0
    while excess(hi) > 0.0:
        hi *= 2.0
        doublings += 1
        if doublings > 200:
            raise TargetUnreachable(f'Censoring proportion {target} is not reachable.')
    c = bisect(excess, lo, hi, xtol=1e-12, rtol=1e-6)
    log.debug(f'Censoring bound c = {c:.6g} gives censoring proportion {target}')
    return c


def generate_dataset(scenario, replicate_index, c=None):
    """
    Generate one replicate. Covariates, event times and censoring times each come from their own keyed
        stream so the sample depends only on (seed, replicate_index).

    Args:
        scenario (SimScenario): The scenario.
        replicate_index (int): Replicate number.
        c (float): Censoring bound from calibrate_censoring; computed when omitted.

    Returns:
        SurvivalSample: n subjects with covariate "x" and an intercept.
    """
    if c is None:
        c = calibrate_censoring(scenario)
    n = scenario.n
    u = stream(scenario.seed, COVARIATE, replicate_index).random(n)
    x = (u < 0.5).astype(float) if scenario.covariate_law == 'bernoulli' else u
    exponential = stream(scenario.seed, EVENT_TIME, replicate_index).standard_exponential(n)
    event_time = exponential ** (1.0 / scenario.kappa) / scenario.rate(x)
    if math.isinf(c):
        censor_time = np.full(n, np.inf)
    else:
        censor_time = c * (1.0 - stream(scenario.seed, CENSOR_TIME, replicate_index).random(n))
    observed = np.minimum(event_time, censor_time)
    status = (event_time <= censor_time).astype(int)
    return SurvivalSample.from_arrays(observed, status, x, intercept=True, covariate_names=('x',))


def add_scenario_arguments(parser):
    """Scenario flags. Defaults are None so that values from --config are only overridden when given."""
    from rlqr.utils.validation import (validate_nonnegative_float, validate_open_unit, validate_positive_float,
                                       validate_positive_int)

    defaults = SimScenario()
    parser.add_argument("-c", "--config", default=None,
                        help="Flat YAML scenario file with keys: "
                             f"{', '.join(f.name for f in fields(SimScenario))}.")
    parser.add_argument("--n", type=validate_positive_int, default=None,
                        help=f"Sample size. Defaults to {defaults.n}.")
    parser.add_argument("--tau", type=validate_open_unit, default=None,
                        help=f"Quantile level. Defaults to {defaults.tau}.")
    parser.add_argument("--t0", dest="t0_list", type=validate_nonnegative_float, nargs='+', default=None,
                        help=f"Follow-up times. Defaults to {' '.join(str(t) for t in defaults.t0_list)}.")
    parser.add_argument("--kappa", type=validate_positive_float, default=None,
                        help=f"Weibull exponent. Defaults to {defaults.kappa}.")
    parser.add_argument("--beta0", dest="beta0_base", type=float, default=None,
                        help="Intercept at t0 = 0 (log tau-quantile for x = 0). Defaults to log(5).")
    parser.add_argument("--beta1", dest="beta1_base", type=float, default=None,
                        help="Covariate effect at t0 = 0, e.g. 0.6931 for log(2). Defaults to 0.")
    parser.add_argument("--censoring", dest="censor_target", type=float, default=None,
                        help="Target censoring proportion in [0, 0.95]. Defaults to 0.")
    parser.add_argument("--covariate", dest="covariate_law", choices=COVARIATE_LAWS, default=None,
                        help='Covariate law. Defaults to "bernoulli".')
    parser.add_argument("--reps", type=validate_positive_int, default=None,
                        help=f"Number of Monte Carlo replications. Defaults to {defaults.reps}.")


def scenario_from_args(args):
    """
    Merge scenario defaults, the --config file, and explicitly given flags (in that order of precedence).

    Returns:
        SimScenario: the scenario.
    """
    values = {}
    if args.config:
        values.update(SimScenario.from_yaml(args.config).as_dict())
    for f in fields(SimScenario):
        given = getattr(args, f.name, None)
        if given is not None:
            values[f.name] = given
    return SimScenario.from_mapping(values)
