import logging
import os
import sys

from utils.config import AppConfig


class Logger:
    def __init__(self, name=__name__, level=None):
        self.logger = logging.getLogger(name)
        if level is None:
            level = AppConfig().get_config()["log_level"].upper()
        self.logger.setLevel(level)

        if not self.logger.handlers:
            formatter = logging.Formatter(
                "[%(asctime)s] [%(levelname)s] %(message)s", datefmt="%Y-%m-%d %H:%M:%S"
            )

            # stdout carries CSV/JSON payloads
            console_handler = logging.StreamHandler(sys.stderr)
            console_handler.setFormatter(formatter)
            self.logger.addHandler(console_handler)
            self.logger.propagate = False

    def get_logger(self) -> logging.Logger:
        return self.logger


def set_global_level(level) -> None:
    """Apply a level to every stoqbell logger created so far."""
    os.environ["STOQBELL_LOG_LEVEL"] = logging.getLevelName(level) if isinstance(level, int) else str(level)
    for name, candidate in logging.Logger.manager.loggerDict.items():
        if isinstance(candidate, logging.Logger) and candidate.handlers:
            candidate.setLevel(level)
