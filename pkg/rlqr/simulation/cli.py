from .monte_carlo import _add_simulate_parser
from .compare import _add_compare_parser


def add_simulation_parsers(subparsers):
    _add_simulate_parser(subparsers)
    _add_compare_parser(subparsers)
