import argparse
from pathlib import Path


def validate_directory(directory, arg_name="directory", create=False):
    """
    Verify argument is path to existing directory and is provided in as a string or pathlib.Path object.

    Args:
        directory (str or pathlib.Path): Path to an existing directory.
        arg_name (str): Name of the argument to use in ValueError messages.
        create (bool): Create the directory (and parents) if it does not exist yet. Defaults to False.

    Returns:
        pathlib.Path: path to validated directory as a pathlib.Path object.
    """
    if isinstance(directory, str):
        directory = Path(directory)
    elif not isinstance(directory, Path):
        raise ValueError(f'"{arg_name}" must be a string or pathlib.Path object.')
    if create:
        directory.mkdir(parents=True, exist_ok=True)
    if not directory.is_dir():
        raise ValueError(f'"{arg_name}" must be a path to an existing directory. '
                         f'No such directory found: {str(directory)}')
    return directory


def validate_file(path, arg_name="file"):
    """
    Verify argument is a path to an existing file.

    Args:
        path (str or pathlib.Path): Path to an existing file.
        arg_name (str): Name of the argument to use in ValueError messages.

    Returns:
        pathlib.Path: path to validated file as a pathlib.Path object.
    """
    if isinstance(path, str):
        path = Path(path)
    elif not isinstance(path, Path):
        raise ValueError(f'"{arg_name}" must be a string or pathlib.Path object.')
    if not path.is_file():
        raise ValueError(f'"{arg_name}" must be a path to an existing file. '
                         f'No such file found: {str(path)}')
    return path


def validate_open_unit(s):
    """
    Validate a real number strictly between 0 and 1 (quantile levels, confidence levels).

    Args:
        s (str): the commandline value.

    Raises:
        argparse.ArgumentTypeError: when not a real number in (0, 1).
    """
    try:
        value = float(s)
    except ValueError:
        raise argparse.ArgumentTypeError(f'Not a real number: "{s}"')
    if not 0.0 < value < 1.0:
        raise argparse.ArgumentTypeError(f'Must lie strictly between 0 and 1: "{s}"')
    return value


def validate_nonnegative_float(s):
    """
    Validate a finite real number greater than or equal to 0.

    Args:
        s (str): the commandline value.

    Raises:
        argparse.ArgumentTypeError: when negative or not a number.
    """
    try:
        value = float(s)
    except ValueError:
        raise argparse.ArgumentTypeError(f'Not a real number: "{s}"')
    if not value >= 0.0 or value == float('inf'):
        raise argparse.ArgumentTypeError(f'Must be a finite number >= 0: "{s}"')
    return value


def validate_positive_float(s):
    """
    Validate a finite real number strictly greater than 0.

    Raises:
        argparse.ArgumentTypeError: when not positive.
    """
    value = validate_nonnegative_float(s)
    if value <= 0.0:
        raise argparse.ArgumentTypeError(f'Must be > 0: "{s}"')
    return value


def validate_positive_int(s):
    """
    Validate an integer greater than 0.

    Raises:
        argparse.ArgumentTypeError: when not a positive integer.
    """
    try:
        value = int(s)
    except ValueError:
        raise argparse.ArgumentTypeError(f'Not an integer: "{s}"')
    if value < 1:
        raise argparse.ArgumentTypeError(f'Must be >= 1: "{s}"')
    return value
