"""
Logging configuration for the rlnc_tdd package.

Console logging on stderr with an optional file handler; the default level
comes from the ``RLNC_TDD_LOG_LEVEL`` environment variable.
"""

import logging
import os
import sys
from pathlib import Path
from typing import Optional

LOG_LEVEL_ENV = "RLNC_TDD_LOG_LEVEL"


def setup_logging(
    level: int = logging.WARNING,
    log_file: Optional[Path] = None,
    format_string: Optional[str] = None
) -> logging.Logger:
    """Configure the root logger.

    Args:
        level: Console logging level (default: WARNING)
        log_file: Optional file path; the file handler records DEBUG and above
        format_string: Optional custom format string

    Returns:
        Configured root logger
    """
    if format_string is None:
        format_string = (
            '%(asctime)s | %(levelname)-8s | %(name)s:%(funcName)s:%(lineno)d | %(message)s'
        )

    formatter = logging.Formatter(format_string, datefmt='%Y-%m-%d %H:%M:%S')

    console_handler = logging.StreamHandler(sys.stderr)
    console_handler.setLevel(level)
    console_handler.setFormatter(formatter)

    root_logger = logging.getLogger()
    root_logger.setLevel(min(level, logging.DEBUG) if log_file else level)
    root_logger.handlers.clear()
    root_logger.addHandler(console_handler)

    if log_file:
        file_handler = logging.FileHandler(log_file, encoding='utf-8')
        file_handler.setLevel(logging.DEBUG)
        file_handler.setFormatter(formatter)
        root_logger.addHandler(file_handler)

    return root_logger


def get_logger(name: str) -> logging.Logger:
    return logging.getLogger(name)


def level_from_verbosity(verbosity: int) -> int:
    """Map a ``-v`` count to a logging level, falling back to the environment default."""
    if verbosity >= 2:
        return logging.DEBUG
    if verbosity == 1:
        return logging.INFO
    return _env_level()


def _env_level() -> int:
    level_str = os.environ.get(LOG_LEVEL_ENV, 'WARNING').upper()
    return getattr(logging, level_str, logging.WARNING)


_setup_done = False

def ensure_logging_setup(level: Optional[int] = None) -> None:
    """Set up logging once with the environment default; an explicit level always reconfigures.

    Called by the CLI entry point, not on import.
    """
    global _setup_done
    if level is not None or not _setup_done:
        setup_logging(level=_env_level() if level is None else level)
        _setup_done = True
