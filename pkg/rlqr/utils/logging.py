import logging
import sys


def setup_basic_logging(log_level=logging.INFO):
    """
    Configure basic console logging for commandline executed scripts. Messages go to stderr so that
        tables written to stdout stay machine-readable.

    Args:
        log_level: The log level to log at. Defaults to logging.INFO.
    """
    formatter = RlqrConsoleFormatter()
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(formatter)
    for existing in list(logging.root.handlers):
        if isinstance(existing.formatter, RlqrConsoleFormatter):
            logging.root.removeHandler(existing)
    logging.root.addHandler(handler)
    logging.root.setLevel(log_level)


class RlqrConsoleFormatter(logging.Formatter):
    """
    Format messages differently based on log level.
    """
    def format(self, record):
        if record.levelno == logging.INFO:
            self._style._fmt = "%(message)s"
        else:
            self._style._fmt = "%(levelname)s: %(message)s"
        return super().format(record)
