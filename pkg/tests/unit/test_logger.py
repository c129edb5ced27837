"""Tests for logging setup and the step decorator."""

import io
import logging
from unittest.mock import MagicMock, patch

import pytest

from gle_homog.utils import errors
from gle_homog.utils.logger import get_logger, log_step, resolve_level, setup, timed


class TestLoggerSetup:
    """Test logger setup functions."""

    def test_setup_creates_logger(self):
        """Test that setup creates a logger with correct configuration."""
        logger = setup(level="INFO")
        assert logger.name == "gle_homog"
        assert logger.level == logging.INFO
        assert logger.propagate is False

    def test_setup_with_debug_level(self):
        """Test setup with DEBUG level."""
        logger = setup(level="debug")
        assert logger.level == logging.DEBUG

    def test_setup_with_numeric_level(self):
        """Test setup with numeric log level."""
        logger = setup(level=logging.WARNING)
        assert logger.level == logging.WARNING

    def test_setup_is_idempotent(self):
        """Test that repeated setup keeps a single handler and updates its level."""
        setup(level="INFO")
        logger = setup(level="ERROR")
        assert len(logger.handlers) == 1
        assert logger.handlers[0].level == logging.ERROR

    def test_get_logger_creates_namespaced_logger(self):
        """Test that get_logger creates properly namespaced loggers."""
        setup()
        assert get_logger("service").name == "gle_homog.service"


class TestLogStep:
    """Test the log_step decorator."""

    def test_returns_result_and_logs(self):
        """Test that the wrapped value is returned and start and end are logged."""
        mock_logger = MagicMock(spec=logging.Logger)

        @log_step
        def double(x):
            return 2 * x

        with patch("gle_homog.utils.logger.get_logger", return_value=mock_logger):
            assert double(4) == 8

        messages = [call.args[0] for call in mock_logger.info.call_args_list]
        assert messages[0] == "Executing double"
        assert messages[1].startswith("Completed double in ")

    def test_reraises_and_logs_error(self):
        """Test that exceptions are logged with traceback and re-raised."""
        mock_logger = MagicMock(spec=logging.Logger)

        @log_step
        def broken():
            raise RuntimeError("boom")

        with patch("gle_homog.utils.logger.get_logger", return_value=mock_logger):
            with pytest.raises(RuntimeError, match="boom"):
                broken()

        mock_logger.error.assert_called_once()
        assert mock_logger.error.call_args.kwargs["exc_info"] is True
        assert "boom" in mock_logger.error.call_args.args[0]

    def test_preserves_metadata(self):
        """Test that functools.wraps keeps the function name."""

        @log_step
        def named():
            """Docstring."""

        assert named.__name__ == "named"
        assert named.__doc__ == "Docstring."


@pytest.fixture
def bare_root_logger():
    """Detach package handlers for the duration of a test."""
    root = logging.getLogger("gle_homog")
    saved = root.handlers[:]
    root.handlers.clear()
    yield root
    root.handlers[:] = saved


class TestResolveLevel:
    """Test log level resolution."""

    @pytest.mark.parametrize(
        "level, expected",
        [("info", logging.INFO), (" Warning ", logging.WARNING), (logging.DEBUG, logging.DEBUG)],
    )
    def test_known_levels(self, level, expected):
        """Test names in any case and numeric levels."""
        assert resolve_level(level) == expected

    def test_unknown_name_is_config_error(self):
        """Test that an unknown level name raises a configuration error."""
        with pytest.raises(errors.ConfigParseError, match="loud"):
            resolve_level("loud")


class TestSetupStream:
    """Test the handler stream."""

    def test_writes_to_given_stream(self, bare_root_logger):
        """Test that records go to the stream passed to setup."""
        buffer = io.StringIO()
        setup(level="INFO", stream=buffer)
        get_logger("service").info("drift table written")

        assert "[INFO] - drift table written" in buffer.getvalue()


class TestTimed:
    """Test the timed context manager."""

    def test_logs_duration_at_debug(self):
        """Test that the block duration is logged once at DEBUG."""
        mock_logger = MagicMock(spec=logging.Logger)

        with timed(mock_logger, "ensemble"):
            pass

        mock_logger.debug.assert_called_once()
        message = mock_logger.debug.call_args.args[0]
        assert message.startswith("ensemble took ") and message.endswith("ms")

    def test_exception_passes_through_unlogged(self):
        """Test that an exception in the block propagates without a log record."""
        mock_logger = MagicMock(spec=logging.Logger)

        with pytest.raises(ValueError):
            with timed(mock_logger, "ensemble"):
                raise ValueError("diverged")

        mock_logger.debug.assert_not_called()
