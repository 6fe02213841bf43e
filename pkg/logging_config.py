import logging
import sys
from logging.handlers import RotatingFileHandler
from pathlib import Path

from qbohm.config import config


class ColoredFormatter(logging.Formatter):
    COLORS = {
        logging.DEBUG: "\033[36m",
        logging.INFO: "\033[32m",
        logging.WARNING: "\033[33m",
        logging.ERROR: "\033[31m",
        logging.CRITICAL: "\033[41m",
    }
    RESET = "\033[0m"

    def format(self, record):
        color = self.COLORS.get(record.levelno, self.RESET)
        record = logging.makeLogRecord(record.__dict__)
        record.levelname = f"{color}{record.levelname}{self.RESET}"
        return super().format(record)


class Logger:
    _configured = False

    def __init__(self, level=logging.INFO, log_dir: str | Path | None = None):
        if Logger._configured:
            return

        self.log_dir = Path(log_dir or config.LOG_DIR)
        self.log_dir.mkdir(parents=True, exist_ok=True)

        root = logging.getLogger()
        root.setLevel(level)
        root.handlers.clear()

        # -------- Console handler (stderr keeps stdout free for CLI output) --------
        console = logging.StreamHandler(sys.stderr)
        console.setLevel(level)
        console.setFormatter(
            ColoredFormatter(
                "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
            )
        )
        root.addHandler(console)

        # -------- File handlers per package --------
        self._add_file_handler("qbohm", "qbohm.log", level)
        self._add_file_handler("runner", "runner.log", level)

        # Reduce noise
        logging.getLogger("hypothesis").setLevel(logging.WARNING)

        Logger._configured = True

    def _add_file_handler(self, logger_name: str, filename: str, level):
        logger = logging.getLogger(logger_name)
        logger.setLevel(level)

        handler = RotatingFileHandler(
            self.log_dir / filename,
            maxBytes=10_000_000,  # 10MB
            backupCount=5,
        )
        handler.setFormatter(
            logging.Formatter(
                "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
            )
        )

        logger.addHandler(handler)

    @classmethod
    def setup(cls, level=logging.INFO, log_dir: str | Path | None = None):
        cls(level, log_dir)
        return cls

    @classmethod
    def reset(cls):
        """Drop handlers installed by setup so it can run again (tests)."""
        for name in ("qbohm", "runner"):
            for handler in list(logging.getLogger(name).handlers):
                handler.close()
                logging.getLogger(name).removeHandler(handler)
        logging.getLogger().handlers.clear()
        cls._configured = False

    @staticmethod
    def get_logger(name: str):
        return logging.getLogger(name)


def setup_logging(level: str | int | None = None, log_dir: str | Path | None = None):
    """
    Initialize the logging configuration.
    This function should be called at the entry point of the application.
    """
    if level is None:
        level = config.LOG_LEVEL
    if isinstance(level, str):
        level = logging.getLevelName(level.upper())
    Logger.setup(level, log_dir)
