"""Logging setup shared by the library and the experiment runner."""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass
from typing import List, Optional

_LOGGING_FORMAT = "%(asctime)s | %(levelname)s | %(name)s | %(message)s"

LEVEL_ENV = "VARSMOOTH_LOG_LEVEL"
FILE_ENV = "VARSMOOTH_LOG_FILE"


@dataclass(frozen=True)
class LogSettings:
    level: int
    log_file: Optional[str]


def _coerce_level(value: object) -> int:
    """Map ``value`` to a logging level, falling back to :data:`logging.INFO`."""

    if isinstance(value, int):
        return value
    if not isinstance(value, str) or not value.strip():
        return logging.INFO
    named = getattr(logging, value.strip().upper(), None)
    if isinstance(named, int):
        return named
    try:
        return int(value)
    except ValueError:
        return logging.INFO


def resolve_settings() -> LogSettings:
    return LogSettings(
        level=_coerce_level(os.getenv(LEVEL_ENV, "INFO")),
        log_file=os.getenv(FILE_ENV) or None,
    )


def _build_handlers(log_file: Optional[str]) -> List[logging.Handler]:
    formatter = logging.Formatter(_LOGGING_FORMAT)
    handlers: List[logging.Handler] = [logging.StreamHandler()]
    if log_file:
        handlers.append(logging.FileHandler(log_file))
    for handler in handlers:
        handler.setFormatter(formatter)
    return handlers


_configured = False


def configure_logging(force: bool = False) -> LogSettings:
    """Install root handlers for the ``varsmooth`` package.

    ``VARSMOOTH_LOG_LEVEL``
        Root level name or number (defaults to ``INFO``).
    ``VARSMOOTH_LOG_FILE``
        Optional file receiving a copy of every record.

    Repeated calls are no-ops unless ``force`` is set.
    """

    global _configured
    settings = resolve_settings()
    if _configured and not force:
        return settings

    root_logger = logging.getLogger()
    for handler in root_logger.handlers[:]:
        root_logger.removeHandler(handler)

    root_logger.setLevel(settings.level)
    for handler in _build_handlers(settings.log_file):
        root_logger.addHandler(handler)

    _configured = True
    return settings
