"""
Logging Configuration Module

Console logging for the harness plus a per-run log file written next to
each run's CSV/JSON outputs.
"""

import logging
import sys
from contextlib import contextmanager
from pathlib import Path
from typing import Iterator, Optional, Union

from src.config import config

CONSOLE_FORMAT = "%(levelname)s - %(message)s"
FILE_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
DATE_FORMAT = "%Y-%m-%d %H:%M:%S"
RUN_LOG_NAME = "run.log"

# pandas pulls numexpr in and it announces its thread count at INFO
QUIET_LOGGERS = ("numexpr", "matplotlib")


def _level(name: Optional[str]) -> int:
    return getattr(logging, (name or config.LOG_LEVEL).upper(), logging.INFO)


def _file_handler(path: Path, level: int) -> logging.FileHandler:
    path.parent.mkdir(parents=True, exist_ok=True)
    handler = logging.FileHandler(path, encoding="utf-8")
    handler.setLevel(level)
    handler.setFormatter(logging.Formatter(FILE_FORMAT, datefmt=DATE_FORMAT))
    return handler


def setup_logging(
    log_file: Optional[str] = None, log_level: Optional[str] = None
) -> logging.Logger:
    """
    Configure the root logger.

    Args:
        log_file: Optional extra log file (default: LOG_FILE)
        log_level: Level name (default: LOG_LEVEL)

    Returns:
        The root logger
    """
    level = _level(log_level)
    log_file = log_file or config.LOG_FILE

    root = logging.getLogger()
    root.setLevel(level)
    root.handlers.clear()

    # stderr, so tables printed on stdout stay clean
    console = logging.StreamHandler(sys.stderr)
    console.setLevel(level)
    console.setFormatter(logging.Formatter(CONSOLE_FORMAT))
    root.addHandler(console)

    if log_file:
        try:
            root.addHandler(_file_handler(Path(log_file), level))
        except OSError as e:
            logging.warning(f"Could not set up file logging: {e}")

    for name in QUIET_LOGGERS:
        logging.getLogger(name).setLevel(logging.WARNING)

    logging.debug(f"Logging configured: level={logging.getLevelName(level)}, file={log_file}")
    return root


@contextmanager
def run_log(directory: Union[str, Path]) -> Iterator[Path]:
    """Mirror every record at DEBUG and above into <directory>/run.log."""
    path = Path(directory) / RUN_LOG_NAME
    handler = _file_handler(path, logging.DEBUG)
    root = logging.getLogger()
    previous = root.level
    # the console keeps its own threshold while the file sees DEBUG
    pinned = [h for h in root.handlers if h.level == logging.NOTSET]
    for existing in pinned:
        existing.setLevel(previous)
    root.setLevel(logging.DEBUG)
    root.addHandler(handler)
    try:
        yield path
    finally:
        root.removeHandler(handler)
        root.setLevel(previous)
        for existing in pinned:
            existing.setLevel(logging.NOTSET)
        handler.close()
