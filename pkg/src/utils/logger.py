import os
import logging
import sys
from logging.handlers import RotatingFileHandler
from concurrent_log_handler import ConcurrentRotatingFileHandler
from pathlib import Path
from config.config import LOG_LEVEL, LOG_FILE, LOG_DIR, LOG_FORMAT

def setup_logging(log_level=None, log_dir=None, log_file=None):
    """
    Configure logging for the application

    Args:
        log_level: Minimum log level to capture (overrides env var)
        log_dir: Directory to store log files (LOG_DIR env var by default)
        log_file: Log file name (overrides env var)
    """
    if log_level is None:
        log_level = LOG_LEVEL
    if isinstance(log_level, str):
        log_level = getattr(logging, log_level.upper(), logging.INFO)

    if log_file is None:
        log_file = LOG_FILE

    if log_dir is None:
        log_dir = Path(LOG_DIR)

    os.makedirs(log_dir, exist_ok=True)

    root_logger = logging.getLogger()
    root_logger.setLevel(log_level)

    # Remove existing handlers to avoid duplicate logs
    for handler in list(root_logger.handlers):
        root_logger.removeHandler(handler)

    formatter = logging.Formatter(LOG_FORMAT)

    console_handler = logging.StreamHandler(sys.stdout)
    console_handler.setFormatter(formatter)
    root_logger.addHandler(console_handler)

    general_log_file = os.path.join(log_dir, log_file)
    root_logger.addHandler(_rotating_handler(general_log_file, formatter))

    error_handler = _rotating_handler(os.path.join(log_dir, 'errors.log'), formatter)
    error_handler.setLevel(logging.ERROR)
    root_logger.addHandler(error_handler)

    return root_logger


def attach_run_log(run_dir, log_name='train.log'):
    """
    Append-only log file inside a run directory, removed again by the returned callable
    """
    formatter = logging.Formatter(LOG_FORMAT)
    handler = logging.FileHandler(os.path.join(run_dir, log_name), mode='a', encoding='utf-8')
    handler.setFormatter(formatter)
    root_logger = logging.getLogger()
    root_logger.addHandler(handler)

    def detach():
        root_logger.removeHandler(handler)
        handler.close()

    return detach


def _rotating_handler(path, formatter):
    try:
        # Use ConcurrentRotatingFileHandler for multi-process logging
        handler = ConcurrentRotatingFileHandler(
            path,
            maxBytes=10 * 1024 * 1024,  # 10 MB
            backupCount=5
        )
    except (ImportError, AttributeError):
        handler = RotatingFileHandler(
            path,
            maxBytes=10 * 1024 * 1024,
            backupCount=5
        )
    handler.setFormatter(formatter)
    return handler
