"""Stderr logging for the command line tool."""
import logging
import sys

YELLOW = "\033[33m"
RED = "\033[31m"
DIM = "\033[2m"
RESET = "\033[0m"

COLORS = {
    logging.DEBUG: DIM,
    logging.INFO: YELLOW,
    logging.WARNING: YELLOW,
    logging.ERROR: RED,
    logging.CRITICAL: RED,
}


class ColorFormatter(logging.Formatter):
    def __init__(self, color):
        super().__init__("%(message)s")
        self.color = color

    def format(self, record):
        message = super().format(record)
        if record.levelno >= logging.WARNING:
            message = "%s: %s" % (record.levelname.lower(), message)
        if not self.color:
            return message
        return "%s%s%s" % (COLORS.get(record.levelno, ""), message, RESET)


def setup_logging(verbosity=0, stream=None):
    """Install a single stderr handler on the package logger.

    verbosity < 0 shows warnings only, 0 shows progress, > 0 adds debug.
    """
    stream = stream or sys.stderr
    logger = logging.getLogger("sarcoast")
    for handler in list(logger.handlers):
        logger.removeHandler(handler)
    handler = logging.StreamHandler(stream)
    handler.setFormatter(ColorFormatter(hasattr(stream, "isatty") and stream.isatty()))
    logger.addHandler(handler)
    logger.propagate = False
    if verbosity < 0:
        logger.setLevel(logging.WARNING)
    elif verbosity == 0:
        logger.setLevel(logging.INFO)
    else:
        logger.setLevel(logging.DEBUG)
    return logger
