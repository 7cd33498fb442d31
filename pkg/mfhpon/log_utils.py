"""
Logging utilities for mfhpon.

Centralizes log level parsing and handler setup for the command line.
Levels come from the [logging] section of a preset or from --log-level;
an unrecognized name falls back to INFO with a warning.
"""

import logging
from logging.handlers import RotatingFileHandler
from pathlib import Path

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"

# File handler rotation: 5MB max, keep 3 backups
_MAX_LOG_BYTES = 5 * 1024 * 1024
_LOG_BACKUPS = 3


def parse_log_level(level_str: str | None) -> int:
    """Parse a log level name.

    Args:
        level_str: Level name such as "INFO" or "debug". None means INFO.

    Returns:
        The logging level as an integer constant (e.g. logging.INFO).
    """
    if not level_str:
        return logging.INFO
    name = level_str.strip().upper()
    level = getattr(logging, name, None)
    if isinstance(level, int):
        return level
    logger.warning("Invalid log level '%s', falling back to INFO", level_str)
    return logging.INFO


def configure_logging(level_str: str | None = "INFO", log_file: str | None = None) -> None:
    """Configure the root logger with console output and optional file output.

    Replaces handlers installed by an earlier call so repeated CLI
    invocations in one process do not duplicate output.

    Args:
        level_str: Log level name.
        log_file: Optional path of a rotating log file.
    """
    level = parse_log_level(level_str)

    root_logger = logging.getLogger()
    for handler in list(root_logger.handlers):
        if getattr(handler, "_mfhpon", False):
            root_logger.removeHandler(handler)
            handler.close()
    root_logger.setLevel(level)

    formatter = logging.Formatter(LOG_FORMAT)

    console_handler = logging.StreamHandler()
    console_handler.setLevel(level)
    console_handler.setFormatter(formatter)
    console_handler._mfhpon = True  # type: ignore[attr-defined]
    root_logger.addHandler(console_handler)

    if log_file:
        try:
            log_path = Path(log_file).expanduser()
            log_path.parent.mkdir(parents=True, exist_ok=True)
            file_handler = RotatingFileHandler(
                log_path, maxBytes=_MAX_LOG_BYTES, backupCount=_LOG_BACKUPS, encoding="utf-8"
            )
            file_handler.setLevel(level)
            file_handler.setFormatter(formatter)
            file_handler._mfhpon = True  # type: ignore[attr-defined]
            root_logger.addHandler(file_handler)
            logger.info("Logging to file: %s", log_path)
        except OSError as e:
            logger.warning("Could not set up file logging: %s", e)
