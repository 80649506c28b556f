"""Application logger shared by every role.

One ``mtc_pki`` logger per process, writing to a rotating file under
``<home>/logs`` and to stderr. Service subcommands switch to a per-role file
(``mtc_pki-ca.log``, ``mtc_pki-mirror.log``, ...) so roles sharing a host never
rotate the same file.
"""
import logging
from logging.handlers import RotatingFileHandler
from pathlib import Path
from typing import Optional

from ..utils.helpers import project_root

_LOGGER: Optional[logging.Logger] = None
_LOG_FILE = project_root() / "logs" / "mtc_pki.log"

MAX_BYTES = 256 * 1024
BACKUP_COUNT = 5
_FORMATTER = logging.Formatter(
    fmt="%(asctime)s [%(levelname)s] %(name)s - %(message)s",
    datefmt="%Y-%m-%d %H:%M:%S",
)


def _file_handler(path: Path) -> RotatingFileHandler:
    path.parent.mkdir(parents=True, exist_ok=True)
    handler = RotatingFileHandler(path, maxBytes=MAX_BYTES, backupCount=BACKUP_COUNT, encoding="utf-8")
    handler.setFormatter(_FORMATTER)
    return handler


def _drop_handlers(logger: logging.Logger, kind: type = logging.Handler) -> None:
    for handler in [h for h in logger.handlers if isinstance(h, kind)]:
        logger.removeHandler(handler)
        handler.close()


def get_logger(level: str = "INFO") -> logging.Logger:
    """Get or create the application logger.

    Args:
        level: Log level used when the logger is created (DEBUG, INFO, WARNING, ERROR).

    Returns:
        The configured Logger instance.
    """
    global _LOGGER
    if _LOGGER is not None:
        return _LOGGER

    logger = logging.getLogger("mtc_pki")
    logger.setLevel(logging.getLevelName(level.upper()))
    logger.propagate = False
    # the named logger outlives a reset singleton
    _drop_handlers(logger)

    logger.addHandler(_file_handler(_LOG_FILE))
    console = logging.StreamHandler()
    console.setFormatter(_FORMATTER)
    logger.addHandler(console)

    _LOGGER = logger
    return logger


def use_role_log(role: str) -> Path:
    """Move file output to ``mtc_pki-<role>.log`` next to the current file.

    Returns:
        The new log file path, also reported by :func:`log_path`.
    """
    global _LOG_FILE
    logger = get_logger()
    path = _LOG_FILE.with_name(f"mtc_pki-{role}.log")
    if path != _LOG_FILE:
        _drop_handlers(logger, RotatingFileHandler)
        logger.addHandler(_file_handler(path))
        _LOG_FILE = path
    return path


def set_log_level(level: str) -> None:
    """Set the log level for the application logger."""
    get_logger(level).setLevel(logging.getLevelName(level.upper()))


def log_path() -> Path:
    return _LOG_FILE
