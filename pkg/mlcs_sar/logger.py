import logging
import sys
from pathlib import Path
from logging.handlers import RotatingFileHandler
from typing import Optional


def setup_logger(
    name: str,
    log_file: Optional[Path] = None,
    level: str = "INFO",
    max_bytes: int = 10 * 1024 * 1024,  # 10MB
    backup_count: int = 5
) -> logging.Logger:
    """Set up a logger with a console handler and an optional rotating file handler"""

    logger = logging.getLogger(name)
    logger.setLevel(getattr(logging, level.upper()))

    console_formatter = logging.Formatter(
        '%(levelname)s - %(message)s'
    )
    file_formatter = logging.Formatter(
        '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    )

    # One console handler per logger, however often we are called
    if not any(getattr(h, "_mlcs_console", False) for h in logger.handlers):
        console_handler = logging.StreamHandler(sys.stderr)
        console_handler.setFormatter(console_formatter)
        console_handler._mlcs_console = True
        logger.addHandler(console_handler)

    if log_file:
        log_file = Path(log_file)
        log_file.parent.mkdir(parents=True, exist_ok=True)
        existing = {
            getattr(h, "baseFilename", None) for h in logger.handlers
        }
        if str(log_file.resolve()) not in existing:
            file_handler = RotatingFileHandler(
                str(log_file),
                maxBytes=max_bytes,
                backupCount=backup_count
            )
            file_handler.setFormatter(file_formatter)
            logger.addHandler(file_handler)

    return logger


def detach_file_handler(logger: logging.Logger, log_file: Path) -> None:
    """Close and remove the rotating handler writing to `log_file`"""
    target = str(Path(log_file).resolve())
    for handler in list(logger.handlers):
        if getattr(handler, "baseFilename", None) == target:
            handler.close()
            logger.removeHandler(handler)


# Package logger; modules log through children of it
default_logger = setup_logger("mlcs_sar")
