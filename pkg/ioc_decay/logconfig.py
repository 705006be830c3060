"""
Process-wide loguru configuration.

Library modules only emit through ``loguru.logger``; entry points (CLI, API
app) call ``configure_logging`` once.
"""

import sys
from pathlib import Path
from typing import Optional

from loguru import logger

CONSOLE_FORMAT = "<level>{level: <8}</level> | <cyan>{name}</cyan>:<cyan>{function}</cyan> - <level>{message}</level>"
FILE_FORMAT = "{time:YYYY-MM-DD HH:mm:ss} | {level: <8} | {name}:{function}:{line} - {message}"


def configure_logging(level: str = "INFO", log_file: Optional[Path] = None) -> None:
    """Replace the default handler with a stderr sink and an optional file sink."""
    logger.remove()
    logger.add(sys.stderr, level=level.upper(), format=CONSOLE_FORMAT)

    if log_file is not None:
        logger.add(
            str(log_file),
            rotation="100 MB",
            retention="7 days",
            level="DEBUG",
            format=FILE_FORMAT,
        )
