import argparse
import sys

from .fit import _add_fit_parser
from .simulation.cli import add_simulation_parsers


def create_rlqr_command_parser():
    parser = argparse.ArgumentParser(
        prog='rlqr',
        description="Quantile regression for residual life with right-censored data.")
    subparsers = parser.add_subparsers(title='Commands', dest='sub-command')
    subparsers.required = True

    _add_fit_parser(subparsers)
    add_simulation_parsers(subparsers)

    return parser


def main(argv=None):
    """Parse ``argv`` (defaults to sys.argv[1:]), run the chosen command and return its exit code."""
    parser = create_rlqr_command_parser()
    args = parser.parse_args(argv)
    return args.func(args)


def rlqr_command():
    sys.exit(main())
