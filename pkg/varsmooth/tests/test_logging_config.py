"""Tests for the environment-driven logging setup."""

from __future__ import annotations

import logging

import pytest

from varsmooth.logging_config import FILE_ENV, LEVEL_ENV, _coerce_level, configure_logging, resolve_settings


@pytest.mark.parametrize(
    "raw, expected",
    [("debug", logging.DEBUG), ("WARNING", logging.WARNING), ("15", 15), ("", logging.INFO), ("loud", logging.INFO)],
)
def test_coerce_level(raw, expected):
    assert _coerce_level(raw) == expected


def test_resolve_settings_reads_environment(monkeypatch, tmp_path):
    monkeypatch.setenv(LEVEL_ENV, "error")
    monkeypatch.setenv(FILE_ENV, str(tmp_path / "run.log"))
    settings = resolve_settings()
    assert settings.level == logging.ERROR
    assert settings.log_file == str(tmp_path / "run.log")


def test_configure_logging_installs_file_handler(monkeypatch, tmp_path):
    log_file = tmp_path / "run.log"
    monkeypatch.setenv(LEVEL_ENV, "DEBUG")
    monkeypatch.setenv(FILE_ENV, str(log_file))
    root = logging.getLogger()
    saved_handlers, saved_level = root.handlers[:], root.level
    try:
        configure_logging(force=True)
        logging.getLogger("varsmooth.test").debug("hello from the test")
        for handler in root.handlers:
            handler.flush()
        assert "hello from the test" in log_file.read_text()
    finally:
        for handler in root.handlers[:]:
            root.removeHandler(handler)
            handler.close()
        for handler in saved_handlers:
            root.addHandler(handler)
        root.setLevel(saved_level)
