"""
Exception taxonomy for rlqr. Every error class carries the exit code the
command line front end maps it to.
"""

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_UNIDENTIFIABLE = 3
EXIT_CONVERGENCE = 4


class RlqrError(Exception):
    """Base class for all rlqr errors."""
    exit_code = 1


class InputError(RlqrError, ValueError):
    """
    Invalid input data, fit settings or scenario.

    Args:
        message (str): Description of the problem.
        subject (int): Index of the offending subject, when there is one.
    """
    exit_code = EXIT_INPUT

    def __init__(self, message, subject=None):
        super().__init__(message)
        self.subject = subject


class DimensionMismatch(InputError):
    pass


class NonPositiveTime(InputError):
    pass


class NoEvents(InputError):
    pass


class NonFiniteValue(InputError):
    pass


class LengthMismatch(InputError):
    pass


class NonPositiveMultiplier(InputError):
    pass


class ZeroSmoothingScale(InputError):
    pass


class BigMTooSmall(InputError):
    pass


class TargetUnreachable(InputError):
    pass


class NonPositiveResidualQuantile(InputError):
    pass


class InvalidFitSpec(InputError):
    pass


class InvalidScenario(InputError):
    pass


class CsvFormatError(InputError):
    """
    Malformed CSV input.

    Args:
        message (str): Description of the problem.
        line (int): 1-based line number in the file (header is line 1), or None.
    """
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f'line {line}: {message}'
        super().__init__(message)


class Unidentifiable(RlqrError):
    """Too little information beyond t0 to identify the coefficients."""
    exit_code = EXIT_UNIDENTIFIABLE


class EmptyRiskSet(Unidentifiable):
    pass


class ConvergenceError(RlqrError):
    """A numerical procedure failed to reach a usable answer."""
    exit_code = EXIT_CONVERGENCE


class MaxIterExceeded(ConvergenceError):
    """
    Iteration budget exhausted.

    Args:
        message (str): Description.
        report (SolveReport): Last iterate, flagged as not converged.
        sigma (np.ndarray): Last covariance iterate (iterative algorithm only).
    """
    def __init__(self, message, report=None, sigma=None):
        super().__init__(message)
        self.report = report
        self.sigma = sigma


class SingularSlope(ConvergenceError):
    pass


class NonPositiveDefiniteSigma(ConvergenceError):
    pass


class DegenerateResamples(ConvergenceError):
    pass


class LpFailure(ConvergenceError):
    pass


class DegenerateWeights(UserWarning):
    """Some uncensored subject at risk has a censoring survival at or below the floor."""
