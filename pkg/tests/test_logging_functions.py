"""
Unit tests for logging and configuration functions.

Tests cover:
- Per-run file logger attachment
- Console handler levels and format
- Handler replacement between runs
"""

from unittest.mock import patch
import logging


class TestAttachFileLogger:
    """Tests for attach_file_logger function."""

    @patch("ddcrp_storylines.cli._FILE_LOG_HANDLER", None)
    def test_attach_file_logger_creates_log_file(self, tmp_path):
        """Test attach_file_logger creates the run directory and its log file."""
        from ddcrp_storylines.cli import attach_file_logger

        output = tmp_path / "runs" / "offline"
        run_ts = "20250101_120000"

        log_path = attach_file_logger(output, run_ts)

        assert log_path.exists()
        assert log_path.is_file()
        assert log_path.name == f"ddcrp_run_{run_ts}.log"
        assert log_path.parent == output.resolve()

    @patch("ddcrp_storylines.cli._FILE_LOG_HANDLER", None)
    def test_attach_file_logger_returns_same_path_when_called_twice(self, tmp_path):
        """Test attach_file_logger returns same path on subsequent calls."""
        from ddcrp_storylines.cli import attach_file_logger

        log_path1 = attach_file_logger(tmp_path / "run", "20250101_120000")
        log_path2 = attach_file_logger(tmp_path / "run", "20250101_120001")

        assert log_path1 == log_path2

    @patch("ddcrp_storylines.cli._FILE_LOG_HANDLER", None)
    def test_attach_file_logger_moves_to_new_directory(self, tmp_path):
        """Test a second output directory replaces the first file handler."""
        from ddcrp_storylines.cli import LOG, attach_file_logger, configure_logging

        configure_logging()
        first = attach_file_logger(tmp_path / "a", "20250101_120000")
        second = attach_file_logger(tmp_path / "b", "20250101_120000")

        assert first != second
        file_handlers = [h for h in LOG.handlers if isinstance(h, logging.FileHandler)]
        assert [h.baseFilename for h in file_handlers] == [str(second)]
        LOG.removeHandler(file_handlers[0])
        file_handlers[0].close()

    @patch("ddcrp_storylines.cli._FILE_LOG_HANDLER", None)
    def test_attach_file_logger_records_info_messages(self, tmp_path):
        """Test INFO messages from library modules reach the run log."""
        from ddcrp_storylines.cli import LOG, attach_file_logger, configure_logging

        configure_logging()
        log_path = attach_file_logger(tmp_path / "run", "20250101_120000")
        logging.getLogger("ddcrp_storylines.sampler").info("Sweep %d/%d", 50, 500)

        handler = next(h for h in LOG.handlers if isinstance(h, logging.FileHandler))
        handler.flush()
        assert "Sweep 50/500" in log_path.read_text()
        LOG.removeHandler(handler)
        handler.close()


class TestConfigureLogging:
    """Tests for configure_logging function."""

    def test_configure_logging_sets_log_level_to_debug(self):
        """Test configure_logging sets LOG level to DEBUG (file handlers decide what they keep)."""
        from ddcrp_storylines.cli import configure_logging, LOG

        configure_logging()

        assert LOG.level == logging.DEBUG

    def test_configure_logging_clears_existing_handlers(self):
        """Test configure_logging clears existing handlers."""
        from ddcrp_storylines.cli import configure_logging, LOG

        dummy_handler = logging.StreamHandler()
        LOG.addHandler(dummy_handler)

        configure_logging()

        assert len(LOG.handlers) == 1
        assert dummy_handler not in LOG.handlers

    def test_configure_logging_sets_proper_formatter(self):
        """Test configure_logging formats console records as 'LEVEL: message'."""
        from ddcrp_storylines.cli import configure_logging, LOG

        configure_logging()

        record = logging.LogRecord(name="test", level=logging.WARNING, pathname="", lineno=0, msg="line %d skipped", args=(3,), exc_info=None)
        assert LOG.handlers[0].formatter.format(record) == "WARNING: line 3 skipped"

    def test_console_levels(self):
        """Test verbosity and quiet map to the console handler level."""
        from ddcrp_storylines.cli import configure_logging, LOG

        expectations = [
            ({}, logging.WARNING),
            ({"verbosity": 1}, logging.INFO),
            ({"verbosity": 2}, logging.DEBUG),
            ({"quiet": True}, logging.ERROR),
            ({"verbosity": 2, "quiet": True}, logging.ERROR),
        ]
        for kwargs, level in expectations:
            configure_logging(**kwargs)
            assert LOG.handlers[0].level == level
