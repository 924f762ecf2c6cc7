"""
Logging for the branching McKean-Vlasov toolkit.
Loggers write to stdout (and optionally a file) and never into reports.
Every logger created here is tracked so the CLI can retune them together.
"""

import logging
import sys
from pathlib import Path
from typing import Dict, Optional

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
DATE_FORMAT = "%Y-%m-%d %H:%M:%S"

_loggers: Dict[str, logging.Logger] = {}


def _resolve_level(level: str) -> int:
    value = getattr(logging, level.upper(), None)
    if not isinstance(value, int):
        raise ValueError(f"unknown log level '{level}'")
    return value


def setup_logger(
    name: str,
    level: Optional[str] = None,
    log_file: Optional[str] = None
) -> logging.Logger:
    """
    Configure and return a logger instance.

    Args:
        name: Logger name (usually __name__ of the module)
        level: Logging level; defaults to ``settings.log_level``
        log_file: Optional file path for log output; defaults to ``settings.log_file``

    Returns:
        Configured logger instance
    """
    from .config import settings

    if name in _loggers:
        return _loggers[name]

    numeric = _resolve_level(level or settings.log_level)
    log_file = log_file if log_file is not None else settings.log_file

    logger = logging.getLogger(name)
    logger.setLevel(numeric)
    logger.propagate = False

    if not logger.handlers:
        formatter = logging.Formatter(fmt=LOG_FORMAT, datefmt=DATE_FORMAT)

        console_handler = logging.StreamHandler(sys.stdout)
        console_handler.setFormatter(formatter)
        logger.addHandler(console_handler)

        if log_file:
            log_path = Path(log_file)
            log_path.parent.mkdir(parents=True, exist_ok=True)
            file_handler = logging.FileHandler(log_path)
            file_handler.setFormatter(formatter)
            logger.addHandler(file_handler)

    _loggers[name] = logger
    return logger


def set_log_level(level: str) -> None:
    """Apply one level to every toolkit logger, existing and future."""
    from .config import settings

    numeric = _resolve_level(level)
    settings.log_level = level.upper()
    for logger in _loggers.values():
        logger.setLevel(numeric)


app_logger = setup_logger("branching_mkv")
