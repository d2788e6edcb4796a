import json
import logging

import pytest

from geomv import logging_config
from geomv.config import settings


def _flush():
    for name in ("", logging_config.JOURNAL_LOGGER):
        for handler in logging.getLogger(name).handlers:
            handler.flush()


@pytest.fixture
def log_settings(tmp_path, monkeypatch):
    """Point logging at tmp_path; the original handlers come back afterwards."""
    monkeypatch.setattr(settings, "LOG_DIR", tmp_path)
    yield settings
    monkeypatch.undo()
    logging_config.configure_logging()


def test_size_rotation_compresses_json_logs(log_settings, monkeypatch, tmp_path):
    monkeypatch.setattr(log_settings, "LOG_JSON", True)
    monkeypatch.setattr(log_settings, "LOG_ROTATION_TYPE", "size")
    monkeypatch.setattr(log_settings, "LOG_MAX_BYTES", 200)
    monkeypatch.setattr(log_settings, "LOG_BACKUP_COUNT", 2)
    monkeypatch.setattr(log_settings, "LOG_COMPRESS", True)
    logging_config.configure_logging()

    stage = logging.getLogger("geomv.pipeline")
    for _ in range(4):
        stage.info("extract: " + "x" * 400)
    stage.info("extract: done")
    _flush()

    lines = [line for line in (tmp_path / "geomv.log").read_text(encoding="utf-8").splitlines() if line]
    record = json.loads(lines[-1])
    assert record["levelname"] == "INFO"
    assert record["message"] == "extract: done"
    assert (tmp_path / "journal.log").exists()
    assert any(p.name.startswith("geomv.log.") and p.suffix == ".gz" for p in tmp_path.iterdir())


def test_structlog_messages_reach_the_log_file(log_settings, monkeypatch, tmp_path):
    monkeypatch.setattr(log_settings, "LOG_JSON", False)
    logging_config.configure_logging()

    logging_config.logger.info("lattice: 12 tasks, 0 journaled, 12 to run")
    _flush()

    text = (tmp_path / "geomv.log").read_text(encoding="utf-8")
    assert "lattice: 12 tasks" in text
    assert " INFO geomv " in text


def test_journal_statements_stay_out_of_the_main_log(log_settings, monkeypatch, tmp_path):
    monkeypatch.setattr(log_settings, "LOG_JSON", False)
    monkeypatch.setattr(log_settings, "JOURNAL_ECHO", True)
    logging_config.configure_logging()

    logging.getLogger("sqlalchemy.engine.Engine").info("SELECT 1")
    _flush()

    assert "SELECT 1" in (tmp_path / "journal.log").read_text(encoding="utf-8")
    assert "SELECT 1" not in (tmp_path / "geomv.log").read_text(encoding="utf-8")
