"""Tests for structlog setup."""

import io
import json
import sys

from src.core.log import configure_logging, get_logger


class TestConfigureLogging:
    """Test level filtering and the output stream."""

    def teardown_method(self):
        """Restore the library default."""
        configure_logging("WARNING")

    def test_json_line_on_stderr(self, capsys):
        """Events are rendered as JSON on stderr, never stdout."""
        configure_logging("INFO", "json")
        get_logger("test").info("round_completed", round=3)
        captured = capsys.readouterr()
        assert captured.out == ""
        event = json.loads(captured.err.strip())
        assert event["event"] == "round_completed"
        assert event["round"] == 3
        assert event["level"] == "info"

    def test_follows_replaced_stderr(self, monkeypatch):
        """A stream swapped in after configuration receives the events."""
        first, second = io.StringIO(), io.StringIO()
        monkeypatch.setattr(sys, "stderr", first)
        configure_logging("INFO", "json")
        monkeypatch.setattr(sys, "stderr", second)
        first.close()
        get_logger("test").info("experiment_completed")
        assert "experiment_completed" in second.getvalue()

    def test_level_filter(self, capsys):
        """Events below the configured level are dropped."""
        configure_logging("WARNING", "text")
        log = get_logger("test")
        log.info("quiet")
        log.warning("loud")
        err = capsys.readouterr().err
        assert "quiet" not in err
        assert "loud" in err

    def test_unknown_level_falls_back_to_info(self, capsys):
        """An unrecognized level name behaves as INFO."""
        configure_logging("CHATTY", "json")
        log = get_logger("test")
        log.debug("hidden")
        log.info("shown")
        err = capsys.readouterr().err
        assert "hidden" not in err
        assert "shown" in err

    def test_default_hides_debug(self, capsys):
        """The library default prints nothing below WARNING."""
        configure_logging("WARNING")
        get_logger("test").debug("fake_pool_built")
        captured = capsys.readouterr()
        assert captured.out == ""
        assert captured.err == ""
