"""
Centralized logging module for latcount.

This module provides a unified logging configuration used by every latcount
package. It supports injected custom loggers, either globally or by name.
Console output goes to stderr so that CSV written to stdout stays clean.
"""

import logging
import os
import sys
from typing import Optional, Union

from ..settings import LOG_FILE, LOG_LEVEL

DEFAULT_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"


class LatCountLoggerConfig:
    _configured = False
    _custom_logger = None
    _custom_loggers = {}  # custom loggers by name

    @classmethod
    def setup_logging(
        cls,
        level: Union[int, str] = logging.INFO,
        format_string: str = DEFAULT_FORMAT,
        log_file: Optional[str] = None,
    ):
        """
        Set up root logging configuration once for the entire application.

        Args:
            level: Logging level, numeric or a name such as "DEBUG"
            format_string: Format for log messages
            log_file: Optional file path to write logs to
        """
        if cls._configured:
            return logging.getLogger()

        if isinstance(level, str):
            level = logging.getLevelName(level.upper())
            if not isinstance(level, int):
                level = logging.INFO

        formatter = logging.Formatter(format_string)

        console_handler = logging.StreamHandler(sys.stderr)
        console_handler.setFormatter(formatter)

        root_logger = logging.getLogger()
        root_logger.setLevel(level)
        root_logger.handlers.clear()
        root_logger.addHandler(console_handler)

        if log_file:
            log_dir = os.path.dirname(log_file)
            if log_dir and not os.path.exists(log_dir):
                os.makedirs(log_dir, exist_ok=True)

            file_handler = logging.FileHandler(log_file, encoding="utf-8")
            file_handler.setFormatter(formatter)
            root_logger.addHandler(file_handler)

        cls._configured = True
        return root_logger

    @classmethod
    def set_level(cls, level: Union[int, str]):
        """Change the root level after setup (used by the CLI --log-level flag)."""
        logging.getLogger().setLevel(
            level.upper() if isinstance(level, str) else level
        )

    @classmethod
    def set_custom_logger(
        cls, logger_instance: logging.Logger, name: Optional[str] = None
    ):
        """
        Register a custom logger instance globally or under a name.

        Args:
            logger_instance: Custom logger instance to use
            name: Optional registration name. If None, sets the global custom logger.
        """
        if name is None:
            cls._custom_logger = logger_instance
        else:
            cls._custom_loggers[name] = logger_instance

    @classmethod
    def get_custom_logger(cls, name: Optional[str] = None) -> Optional[logging.Logger]:
        """
        Get a registered custom logger by name or the global custom logger.

        Returns:
            Custom logger instance if found, None otherwise.
        """
        if name is None:
            return cls._custom_logger
        return cls._custom_loggers.get(name)

    @classmethod
    def reset_custom_logger(cls, name: Optional[str] = None):
        """Remove a custom logger by name, or the global one when name is None."""
        if name is None:
            cls._custom_logger = None
        else:
            cls._custom_loggers.pop(name, None)

    @classmethod
    def get_all_custom_loggers(cls) -> dict:
        return cls._custom_loggers.copy()


def get_latcount_logger(
    name: str, use_custom: bool = True, custom_logger_name: Optional[str] = None
) -> logging.Logger:
    """
    Get a logger using the centralized latcount logging configuration.

    Args:
        name: Name of the logger (typically __name__ from the calling module)
        use_custom: Whether to use a custom logger if one is registered
        custom_logger_name: Optional specific custom logger name to use

    Returns:
        Configured logger instance
    """
    if custom_logger_name and use_custom:
        custom_logger = LatCountLoggerConfig.get_custom_logger(custom_logger_name)
        if custom_logger is not None:
            return custom_logger

    if use_custom and LatCountLoggerConfig._custom_logger is not None:
        return LatCountLoggerConfig._custom_logger

    return logging.getLogger(name)


# Default configuration from the environment (.env honored)
LatCountLoggerConfig.setup_logging(level=LOG_LEVEL, log_file=LOG_FILE)
