import logging
import sys
from datetime import datetime
from typing import Optional

from config.settings import LOGS_DIR, AppConfig

# Thread name included: retraction batches, scans and balancing tables log from pool workers
LOG_FORMAT = '%(asctime)s - %(name)s - %(threadName)s - %(levelname)s - %(message)s'


def setup_logger(name: str, log_file: Optional[str] = None, level: Optional[str] = None,
                 to_file: Optional[bool] = None) -> logging.Logger:
    """
    Logger with a stderr console handler and, unless disabled, a daily file under LOGS_DIR.

    Console output goes to stderr so that the runners' stdout report stays clean.
    Calling again for the same name returns the configured logger unchanged.
    """
    if level is None:
        level = AppConfig.LOG_LEVEL
    if to_file is None:
        to_file = AppConfig.LOG_TO_FILE

    logger = logging.getLogger(name)
    logger.setLevel(getattr(logging, level.upper()))

    if logger.handlers:
        return logger

    formatter = logging.Formatter(LOG_FORMAT, datefmt='%Y-%m-%d %H:%M:%S')

    console_handler = logging.StreamHandler(sys.stderr)
    console_handler.setLevel(logging.WARNING)
    console_handler.setFormatter(formatter)
    logger.addHandler(console_handler)

    if not to_file:
        return logger

    # One file per experiment module and day
    if log_file is None:
        log_file = f"ym_{name.rsplit('.', 1)[-1]}_{datetime.now().strftime('%Y%m%d')}.log"

    file_handler = logging.FileHandler(LOGS_DIR / log_file, encoding='utf-8')
    file_handler.setLevel(getattr(logging, level.upper()))
    file_handler.setFormatter(formatter)
    logger.addHandler(file_handler)

    return logger
