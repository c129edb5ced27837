"""Package logging: one stream handler on the ``gle_homog`` logger plus timing helpers for long steps."""

import logging
import sys
import time
from contextlib import contextmanager
from functools import wraps
from typing import IO, Iterator, Optional, Union

from gle_homog.utils import errors

ROOT = "gle_homog"
LOG_FORMAT = "%(asctime)s - [%(levelname)s] - %(message)s"
DATE_FORMAT = "%Y-%m-%d %H:%M:%S"


def resolve_level(level: Union[str, int]) -> int:
    """Numeric level for a name such as ``"debug"`` or an int; unknown names are a config error."""
    if isinstance(level, int):
        return level
    value = logging.getLevelName(level.strip().upper())
    if not isinstance(value, int):
        raise errors.ConfigParseError(f"unknown log level '{level}'")
    return value


def setup(level: Union[str, int] = "INFO", stream: Optional[IO[str]] = None) -> logging.Logger:
    numeric = resolve_level(level)
    logger = logging.getLogger(ROOT)
    logger.setLevel(numeric)

    if not logger.handlers:
        handler = logging.StreamHandler(stream or sys.stderr)
        handler.setFormatter(logging.Formatter(LOG_FORMAT, datefmt=DATE_FORMAT))
        logger.addHandler(handler)
    for handler in logger.handlers:
        handler.setLevel(numeric)

    # stdout carries no log lines
    logger.propagate = False
    return logger


def get_logger(name: str) -> logging.Logger:
    return logging.getLogger(f"{ROOT}.{name}")


def _elapsed_ms(start: float) -> float:
    return round((time.perf_counter() - start) * 1000, 2)


@contextmanager
def timed(logger: logging.Logger, label: str) -> Iterator[None]:
    """Log how long the enclosed block took at DEBUG. Exceptions pass through unlogged."""
    start = time.perf_counter()
    yield
    logger.debug(f"{label} took {_elapsed_ms(start)}ms")


def log_step(func):
    """Wrap an orchestration step: INFO on entry and exit with the duration, ERROR with traceback on failure."""

    @wraps(func)
    def wrapper(*args, **kwargs):
        step_logger = get_logger(f"step.{func.__name__}")
        start = time.perf_counter()
        step_logger.info(f"Executing {func.__name__}")
        try:
            result = func(*args, **kwargs)
        except Exception as e:
            step_logger.error(f"Error in {func.__name__} after {_elapsed_ms(start)}ms: {e}", exc_info=True)
            raise
        step_logger.info(f"Completed {func.__name__} in {_elapsed_ms(start)}ms")
        return result

    return wrapper
