"""Process-wide logging: console warnings plus rotating files under ``settings.LOG_DIR``.

``geomv.log`` receives every record at ``LOG_LEVEL``; ``journal.log`` receives the
SQL emitted against the lattice journal (only when ``JOURNAL_ECHO`` is on).
Rotated files are gzipped when ``LOG_COMPRESS`` is set.
"""

import gzip
import logging
import os
import shutil
from logging.handlers import RotatingFileHandler, TimedRotatingFileHandler
from pathlib import Path
from typing import Iterable

import structlog

try:
    from pythonjsonlogger.json import JsonFormatter
except ImportError:  # python-json-logger < 3
    from pythonjsonlogger.jsonlogger import JsonFormatter

from geomv.config import settings

LINE_FORMAT = "%(asctime)s %(levelname)s %(name)s %(message)s"
DATE_FORMAT = "%Y-%m-%d %H:%M:%S"
JOURNAL_LOGGER = "sqlalchemy.engine"


def _gzip_rotated(paths: Iterable[str]) -> None:
    for rotated in paths:
        if rotated.endswith(".gz") or not os.path.isfile(rotated):
            continue
        with open(rotated, "rb") as src, gzip.open(f"{rotated}.gz", "wb") as dst:
            shutil.copyfileobj(src, dst)
        Path(rotated).unlink(missing_ok=True)


class GzipSizeRotatingHandler(RotatingFileHandler):
    def doRollover(self):
        super().doRollover()
        if settings.LOG_COMPRESS:
            _gzip_rotated([f"{self.baseFilename}.1"])


class GzipTimedRotatingHandler(TimedRotatingFileHandler):
    def doRollover(self):
        super().doRollover()
        if settings.LOG_COMPRESS:
            base = Path(self.baseFilename)
            _gzip_rotated(str(p) for p in base.parent.glob(f"{base.name}.*"))


def _file_formatter() -> logging.Formatter:
    if settings.LOG_JSON:
        return JsonFormatter(LINE_FORMAT)
    return logging.Formatter(fmt=LINE_FORMAT, datefmt=DATE_FORMAT)


def _rotating_handler(path: Path, level: int) -> logging.Handler:
    if settings.LOG_ROTATION_TYPE == "time":
        handler = GzipTimedRotatingHandler(
            str(path), when=settings.LOG_ROTATION_WHEN, backupCount=settings.LOG_BACKUP_COUNT
        )
    else:
        handler = GzipSizeRotatingHandler(
            str(path), maxBytes=settings.LOG_MAX_BYTES, backupCount=settings.LOG_BACKUP_COUNT
        )
    handler.setLevel(level)
    handler.setFormatter(_file_formatter())
    return handler


def _replace_handlers(target: logging.Logger, *handlers: logging.Handler) -> None:
    for old in list(target.handlers):
        target.removeHandler(old)
        if isinstance(old, logging.FileHandler):
            old.close()
    for handler in handlers:
        target.addHandler(handler)


def _log_dir() -> Path:
    log_dir = Path(settings.LOG_DIR)
    if not log_dir.is_absolute():
        log_dir = Path.cwd() / log_dir
    log_dir.mkdir(parents=True, exist_ok=True)
    return log_dir


def configure_logging():
    """(Re)install the handlers from the current `geomv.config.settings`."""
    log_dir = _log_dir()
    level = getattr(logging, settings.LOG_LEVEL.upper(), logging.INFO)

    console = logging.StreamHandler()
    console.setLevel(logging.WARNING)
    console.setFormatter(logging.Formatter(LINE_FORMAT, datefmt=DATE_FORMAT))

    root = logging.getLogger()
    root.setLevel(level)
    _replace_handlers(root, console, _rotating_handler(log_dir / "geomv.log", level))

    journal = logging.getLogger(JOURNAL_LOGGER)
    journal.setLevel(logging.INFO if settings.JOURNAL_ECHO else logging.WARNING)
    journal.propagate = False
    _replace_handlers(journal, _rotating_handler(log_dir / "journal.log", logging.INFO))

    structlog.configure(
        processors=[structlog.processors.KeyValueRenderer(key_order=["event", "logger", "level"])],
        logger_factory=structlog.stdlib.LoggerFactory(),
    )


logger = structlog.get_logger("geomv")
